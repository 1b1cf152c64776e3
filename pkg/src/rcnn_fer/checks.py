"""Finite-difference gradient checks and brute-force oracle comparisons.

Both suites return a list of :class:`CheckResult` so the CLI and the test
suite can share them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracles
from . import tensor as T
from .cnn import CnnConfig, build_model, forward_batch
from .rnn import init_cell, sequence_loss
from .tensor import ActivationKind, BatchNormState, GradTape

FD_STEP = 1e-5
GRAD_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} (tol {self.tolerance:g})"


def _evaluate(f):
    with T.record_branches() as log:
        value = float(f())
    return value, log


def _same_branches(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def kink_safe_difference(f, param: np.ndarray, k: int, h: float = FD_STEP, base=None,
                         min_step: float = 1e-8) -> float | None:
    """Central difference at flat position ``k`` that never straddles a branch
    switch of a piecewise primitive (pool argmax, sign masks).

    The step shrinks tenfold until both probes take the same branches as the
    unperturbed point; None if that never happens above ``min_step``.
    """
    if base is None:
        base = _evaluate(f)[1]
    flat = param.reshape(-1)
    orig = flat[k]
    try:
        while h >= min_step:
            flat[k] = orig + h
            up, up_log = _evaluate(f)
            flat[k] = orig - h
            down, down_log = _evaluate(f)
            if _same_branches(up_log, base) and _same_branches(down_log, base):
                return (up - down) / (2 * h)
            h /= 10
    finally:
        flat[k] = orig
    return None


def max_grad_error(loss_fn: Callable[[GradTape | None, dict], np.ndarray], params: dict[str, np.ndarray],
                   samples: int | None = 16, seed: int = 0, h: float = FD_STEP) -> float:
    """Largest relative error between tape gradients and central differences.

    ``loss_fn(tape, params)`` must build a scalar loss from ``params``. With
    ``samples`` set, only that many random entries per parameter are probed.
    Probes sitting on a kink at every step size count as failures.
    """
    tape = GradTape()
    watched = {k: tape.watch(k, v) for k, v in params.items()}
    grads = tape.backward(loss_fn(tape, watched))
    f = lambda: loss_fn(None, params)
    base = _evaluate(f)[1]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        size = p.size
        idx = range(size) if samples is None or size <= samples else rng.choice(size, samples, replace=False)
        g = grads[name].reshape(-1)
        for k in idx:
            n = kink_safe_difference(f, p, int(k), h, base)
            worst = max(worst, np.inf if n is None else oracles.relative_error(g[k], n))
    return worst


# --------------------------------------------------------------------------
# Gradient suite
# --------------------------------------------------------------------------

def _op_cases(rng):
    x = rng.normal(size=(2, 6, 6, 2))
    k = rng.normal(size=(3, 3, 2, 3))
    proj = rng.normal(size=(2, 4, 4, 3))
    yield "conv2d valid", {"x": x, "k": k}, lambda t, p: T.weighted_sum(T.conv2d(p["x"], p["k"], tape=t), proj, tape=t)
    proj_s = rng.normal(size=(2, 3, 3, 3))
    yield "conv2d same stride 2", {"x": x.copy(), "k": k.copy()}, lambda t, p: T.weighted_sum(
        T.conv2d(p["x"], p["k"], stride=2, padding="same", tape=t), proj_s, tape=t)
    xp = rng.normal(size=(2, 4, 4, 3))
    proj_p = rng.normal(size=(2, 2, 2, 3))
    yield "max_pool2d", {"x": xp}, lambda t, p: T.weighted_sum(T.max_pool2d(p["x"], tape=t), proj_p, tape=t)
    xb = rng.normal(size=(3, 2, 2, 4))
    proj_b = rng.normal(size=xb.shape)
    state = BatchNormState(rng.normal(size=4), rng.uniform(0.5, 2, size=4))
    bn_params = {"x": xb, "g": rng.normal(size=4), "b": rng.normal(size=4)}
    yield "batch_norm train", bn_params, lambda t, p: T.weighted_sum(
        T.batch_norm(p["x"], p["g"], p["b"], state, "train", tape=t)[0], proj_b, tape=t)
    yield "batch_norm infer", {k: v.copy() for k, v in bn_params.items()}, lambda t, p: T.weighted_sum(
        T.batch_norm(p["x"], p["g"], p["b"], state, "infer", tape=t)[0], proj_b, tape=t)
    xd = rng.normal(size=(3, 4))
    proj_d = rng.normal(size=(3, 5))
    yield "dense", {"x": xd, "w": rng.normal(size=(4, 5)), "b": rng.normal(size=5)}, lambda t, p: T.weighted_sum(
        T.dense(p["x"], p["w"], p["b"], tape=t), proj_d, tape=t)
    # keep activation probes away from the kinks at 0 and +-1
    xa = rng.uniform(0.1, 0.9, size=7) * rng.choice([-1, 1], size=7)
    xa_wide = xa * 2.5
    proj_a = rng.normal(size=7)
    for kind in ActivationKind:
        data = xa_wide if kind is ActivationKind.HARD_CLAMP_EQ8 else xa
        yield f"activate {kind.name}", {"x": data.copy()}, (
            lambda kind: lambda t, p: T.weighted_sum(T.activate(kind, p["x"], tape=t), proj_a, tape=t))(kind)
    logits = rng.normal(size=(4, 7))
    labels = rng.integers(0, 7, size=4)
    yield "softmax_cross_entropy", {"z": logits}, lambda t, p: T.softmax_cross_entropy(p["z"], labels, tape=t)
    probs = rng.uniform(0.05, 1, size=(4, 7))
    yield "nll_from_probs", {"q": probs}, lambda t, p: T.nll_from_probs(p["q"], labels, tape=t)


def cnn_loss_fn(model, images, labels):
    def loss(tape, params):
        logits, _, _ = forward_batch(model, images, mode="train", tape=tape, params=params)
        return T.softmax_cross_entropy(logits, labels, tape=tape)
    return loss


def rnn_loss_fn(cell, xs, ys):
    return lambda tape, params: sequence_loss(cell, xs, ys, params, tape)[0]


def gradient_suite(seed: int = 0, samples: int = 12) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, params, fn in _op_cases(rng):
        err = max_grad_error(fn, params, samples=None, seed=seed)
        results.append(CheckResult(f"grad {name}", err < GRAD_TOL, err, GRAD_TOL))

    images = rng.uniform(0, 1, size=(2, 32, 32, 1))
    labels = rng.integers(0, 7, size=2)
    for fc_kind in (ActivationKind.SIGMOID_EQ1, ActivationKind.SIGMOID_STANDARD):
        m = build_model(CnnConfig(input_size=32, seed=seed, fc_activation=fc_kind))
        err = max_grad_error(cnn_loss_fn(m, images, labels), {k: v.copy() for k, v in m.params.items()},
                             samples=samples, seed=seed)
        results.append(CheckResult(f"grad cnn reduced-32 fc={fc_kind.name}", err < GRAD_TOL, err, GRAD_TOL))

    cell = init_cell(hidden=6, seed=seed)
    cell = cell.with_params({k: v + rng.normal(0, 0.1, v.shape) for k, v in cell.params.items()})
    xs = rng.dirichlet(np.ones(7), size=6)
    ys = rng.integers(0, 7, size=6)
    err = max_grad_error(rnn_loss_fn(cell, xs, ys), {k: v.copy() for k, v in cell.params.items()},
                         samples=None, seed=seed)
    results.append(CheckResult("grad rnn cell (6 steps, h=6)", err < GRAD_TOL, err, GRAD_TOL))
    return results


# --------------------------------------------------------------------------
# Oracle suite
# --------------------------------------------------------------------------

def oracle_suite(cases: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = {"conv2d": 0.0, "max_pool2d": 0.0, "batch_norm": 0.0, "dense": 0.0}
    for _ in range(cases):
        h, w = rng.integers(3, 8, size=2)
        c, f = rng.integers(1, 4, size=2)
        stride = int(rng.integers(1, 3))
        x = rng.normal(size=(h, w, c))
        k = rng.normal(size=(3, 3, c, f))
        worst["conv2d"] = max(worst["conv2d"], np.abs(T.conv2d(x, k, stride) - oracles.conv2d_loops(x, k, stride)).max())

        hp, wp = 2 * rng.integers(1, 5, size=2)
        xp = rng.normal(size=(hp, wp, int(rng.integers(1, 4))))
        worst["max_pool2d"] = max(worst["max_pool2d"], np.abs(T.max_pool2d(xp) - oracles.max_pool_loops(xp)).max())

        xb = rng.normal(size=(int(rng.integers(2, 5)), 3, 3, int(rng.integers(1, 4)))) * 3 + 1
        ch = xb.shape[-1]
        g, b = rng.normal(size=ch), rng.normal(size=ch)
        out, _ = T.batch_norm(xb, g, b, BatchNormState.fresh(ch), "train")
        worst["batch_norm"] = max(worst["batch_norm"], np.abs(out - oracles.batch_norm_two_pass(xb, g, b)).max())

        n, m = rng.integers(1, 9, size=2)
        xd, wd, bd = rng.normal(size=n), rng.normal(size=(n, m)), rng.normal(size=m)
        worst["dense"] = max(worst["dense"], np.abs(T.dense(xd, wd, bd) - oracles.dense_sum(xd, wd, bd)).max())

    tol = {"conv2d": 1e-9, "max_pool2d": 1e-9, "batch_norm": 1e-9, "dense": 1e-12}
    return [CheckResult(f"oracle {k} ({cases} cases)", v <= tol[k], v, tol[k]) for k, v in worst.items()]
