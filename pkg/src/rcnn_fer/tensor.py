"""Dense tensor primitives with a minimal reverse-mode gradient tape.

Tensors are plain float64 ``numpy.ndarray`` objects. Every layer primitive
accepts an optional :class:`GradTape`; when one is given the primitive records
a vector-Jacobian product so that :meth:`GradTape.backward` can route gradients
to any array registered with :meth:`GradTape.watch`.

Image-like tensors are channel-last: ``H x W x C`` or batched ``N x H x W x C``.
"""
from __future__ import annotations

import contextvars
import enum
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


class ShapeError(ValueError):
    """Raised when tensor extents do not agree."""


class TapeError(RuntimeError):
    pass


_branch_log: contextvars.ContextVar[list | None] = contextvars.ContextVar("branch_log", default=None)


@contextmanager
def record_branches():
    """Collect the branch decisions (argmax, sign masks) of piecewise primitives
    evaluated inside the block, in call order."""
    log: list[np.ndarray] = []
    token = _branch_log.set(log)
    try:
        yield log
    finally:
        _branch_log.reset(token)


def _note_branch(decision: np.ndarray) -> None:
    log = _branch_log.get()
    if log is not None:
        log.append(decision)


def tensor(data, check: bool = True) -> np.ndarray:
    """Build a float64 tensor, rejecting NaN/Inf when ``check`` is set."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim > 0 and 0 in arr.shape:
        raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
    if check and not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


class ActivationKind(enum.Enum):
    SIGMOID_EQ1 = "sigmoid_eq1"
    SIGMOID_STANDARD = "sigmoid_standard"
    SOFTMAX_EQ6_LITERAL = "softmax_eq6_literal"
    SOFTMAX_STANDARD = "softmax_standard"
    HARD_CLAMP_EQ8 = "hard_clamp_eq8"
    IDENTITY = "identity"

    @property
    def is_softmax(self) -> bool:
        return self in (ActivationKind.SOFTMAX_STANDARD, ActivationKind.SOFTMAX_EQ6_LITERAL)


# --------------------------------------------------------------------------
# Gradient tape
# --------------------------------------------------------------------------

@dataclass
class _Record:
    output: np.ndarray
    inputs: tuple
    vjp: Callable


class GradTape:
    """Records primitive applications for reverse-mode differentiation.

    Arrays are tracked by object identity, so the tape keeps a reference to
    every array it has seen. A tape is single-use and single-owner.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._params: dict[str, np.ndarray] = {}
        self._live: set[int] = set()
        self._keep: list[np.ndarray] = []

    def watch(self, name: str, array: np.ndarray) -> np.ndarray:
        if name in self._params:
            raise TapeError(f"parameter {name!r} already watched")
        array = np.asarray(array, dtype=np.float64)
        if id(array) in self._live:
            # Same object watched twice under two names: give it a fresh identity.
            array = array.view()
        self._params[name] = array
        self._live.add(id(array))
        self._keep.append(array)
        return array

    def requires_grad(self, array) -> bool:
        return id(array) in self._live

    def record(self, output: np.ndarray, inputs: Sequence, vjp: Callable) -> None:
        needs = tuple(self.requires_grad(x) for x in inputs)
        if not any(needs):
            return
        self._records.append(_Record(output, tuple(inputs), lambda g: vjp(g, needs)))
        self._live.add(id(output))
        self._keep.append(output)

    def __len__(self):
        return len(self._records)

    def backward(self, output: np.ndarray, grad: np.ndarray | None = None) -> dict[str, np.ndarray]:
        """Propagate ``grad`` (ones for a scalar output) back to watched parameters.

        Parameters that do not influence ``output`` get zero gradients.
        """
        if not self._records:
            raise TapeError("backward called on an empty tape")
        if grad is None:
            if np.size(output) != 1:
                raise TapeError("non-scalar output requires an explicit upstream gradient")
            grad = np.ones_like(output, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != np.shape(output):
            raise ShapeError(f"upstream gradient shape {grad.shape} != output shape {np.shape(output)}")

        grads: dict[int, np.ndarray] = {id(output): grad}
        for rec in reversed(self._records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            for x, gx in zip(rec.inputs, rec.vjp(g)):
                if gx is None or not self.requires_grad(x):
                    continue
                key = id(x)
                if key in grads:
                    grads[key] = grads[key] + gx
                else:
                    grads[key] = gx
        out = {}
        for name, p in self._params.items():
            g = grads.get(id(p))
            out[name] = np.zeros_like(p) if g is None else np.asarray(g).reshape(p.shape)
        return out


def _maybe_record(tape, output, inputs, vjp):
    if tape is not None:
        tape.record(output, inputs, vjp)
    return output


# --------------------------------------------------------------------------
# Convolution
# --------------------------------------------------------------------------

def _same_pads(size: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def conv2d(x: np.ndarray, kernels: np.ndarray, stride: int = 1, padding: str = "valid",
           tape: GradTape | None = None) -> np.ndarray:
    """Cross-correlate ``x`` (H x W x C or N x H x W x C) with ``Kh x Kw x C x F`` kernels."""
    if stride < 1:
        raise ValueError(f"stride must be a positive int, got {stride}")
    if padding not in ("valid", "same"):
        raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be Kh x Kw x C x F, got shape {kernels.shape}")
    single = x.ndim == 3
    xb = x[None] if single else x
    if xb.ndim != 4:
        raise ShapeError(f"input must be H x W x C or N x H x W x C, got shape {x.shape}")
    kh, kw, kc, _ = kernels.shape
    n, h, w, c = xb.shape
    if c != kc:
        raise ShapeError(f"input has {c} channels but kernels expect {kc}")

    if padding == "same":
        pt, pb = _same_pads(h, kh, stride)
        pl, pr = _same_pads(w, kw, stride)
        xp = np.pad(xb, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    else:
        pt = pb = pl = pr = 0
        xp = xb
    hp, wp = xp.shape[1], xp.shape[2]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if hp < kh or wp < kw or ho < 1 or wo < 1:
        raise ShapeError(f"kernel {kh}x{kw} does not fit input {h}x{w} with {padding} padding")

    f = kernels.shape[3]
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    # im2col rows ordered (Kh, Kw, C) to match the kernel layout
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
    out = (cols @ kernels.reshape(kh * kw * c, f)).reshape(n, ho, wo, f)
    result = out[0] if single else out

    def vjp(g, needs):
        gb = g[None] if single else g
        gx = gk = None
        if needs[1]:
            gk = (cols.T @ gb.reshape(-1, f)).reshape(kernels.shape)
        if needs[0]:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + (ho - 1) * stride + 1:stride, j:j + (wo - 1) * stride + 1:stride, :] += (
                        gb @ kernels[i, j].T
                    )
            gx = gxp[:, pt:pt + h, pl:pl + w, :]
            if single:
                gx = gx[0]
        return gx, gk

    return _maybe_record(tape, result, (x, kernels), vjp)


# --------------------------------------------------------------------------
# Pooling
# --------------------------------------------------------------------------

def max_pool2d(x: np.ndarray, window: int = 2, tape: GradTape | None = None) -> np.ndarray:
    """Non-overlapping ``window x window`` max pooling (stride equals window).

    Ties route the gradient to the first maximal element in row-major order.
    """
    single = x.ndim == 3
    xb = x[None] if single else x
    if xb.ndim != 4:
        raise ShapeError(f"input must be H x W x C or N x H x W x C, got shape {x.shape}")
    n, h, w, c = xb.shape
    if h % window:
        raise ShapeError(f"height (axis H) extent {h} is not divisible by pool window {window}")
    if w % window:
        raise ShapeError(f"width (axis W) extent {w} is not divisible by pool window {window}")
    ho, wo = h // window, w // window
    blocks = xb.reshape(n, ho, window, wo, window, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, ho, wo, c, window * window)
    arg = blocks.argmax(axis=-1)
    _note_branch(arg)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    result = out[0] if single else out

    def vjp(g, needs):
        gb = g[None] if single else g
        gblocks = np.zeros((n, ho, wo, c, window * window))
        np.put_along_axis(gblocks, arg[..., None], gb[..., None], axis=-1)
        gx = gblocks.reshape(n, ho, wo, c, window, window).transpose(0, 1, 4, 2, 5, 3)
        gx = gx.reshape(n, h, w, c)
        return (gx[0] if single else gx,)

    return _maybe_record(tape, result, (x,), vjp)


# --------------------------------------------------------------------------
# Batch normalization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BatchNormState:
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels))


def batch_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, state: BatchNormState,
               mode: str = "train", eps: float = BN_EPS, momentum: float = BN_MOMENTUM,
               tape: GradTape | None = None) -> tuple[np.ndarray, BatchNormState]:
    """Per-channel (last axis) normalization.

    Returns the output and the updated running statistics; the input state is
    never mutated. In ``infer`` mode the returned state is ``state`` itself.
    """
    if x.size == 0:
        raise ShapeError("batch_norm on a zero-size batch")
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},), got {gamma.shape} and {beta.shape}")
    axes = tuple(range(x.ndim - 1))

    if mode == "infer":
        inv = 1.0 / np.sqrt(state.var + eps)
        xhat = (x - state.mean) * inv
        out = xhat * gamma + beta

        def vjp(g, needs):
            gx = g * gamma * inv if needs[0] else None
            gg = (g * xhat).sum(axis=axes) if needs[1] else None
            gb = g.sum(axis=axes) if needs[2] else None
            return gx, gg, gb

        return _maybe_record(tape, out, (x, gamma, beta), vjp), state
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")

    m = x.size // c
    mean = x.mean(axis=axes)
    centered = x - mean
    var = (centered * centered).mean(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma + beta
    new_state = BatchNormState(momentum * state.mean + (1 - momentum) * mean,
                               momentum * state.var + (1 - momentum) * var)

    def vjp(g, needs):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gx = None
        if needs[0]:
            gx = (gamma * inv / m) * (m * g - gb - xhat * gg)
        return gx, (gg if needs[1] else None), (gb if needs[2] else None)

    return _maybe_record(tape, out, (x, gamma, beta), vjp), new_state


# --------------------------------------------------------------------------
# Dense and shape plumbing
# --------------------------------------------------------------------------

def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray,
          tape: GradTape | None = None) -> np.ndarray:
    """``x @ weights + bias`` for a vector or a batch of row vectors."""
    if weights.ndim != 2:
        raise ShapeError(f"weights must be n x m, got shape {weights.shape}")
    n, m = weights.shape
    if x.shape[-1] != n:
        raise ShapeError(f"input length {x.shape[-1]} does not match weights rows {n}")
    if bias.shape != (m,):
        raise ShapeError(f"bias must have shape ({m},), got {bias.shape}")
    out = x @ weights + bias

    def vjp(g, needs):
        gx = g @ weights.T if needs[0] else None
        gw = None
        if needs[1]:
            gw = np.outer(x, g) if x.ndim == 1 else x.T @ g
        gb = (g if g.ndim == 1 else g.sum(axis=0)) if needs[2] else None
        return gx, gw, gb

    return _maybe_record(tape, out, (x, weights, bias), vjp)


def add(a: np.ndarray, b: np.ndarray, tape: GradTape | None = None) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add requires equal shapes, got {a.shape} and {b.shape}")
    out = a + b
    return _maybe_record(tape, out, (a, b), lambda g, needs: (g, g))


def flatten(x: np.ndarray, batched: bool = False, tape: GradTape | None = None) -> np.ndarray:
    shape = x.shape
    out = x.reshape(shape[0], -1) if batched else x.reshape(-1)
    return _maybe_record(tape, out, (x,), lambda g, needs: (g.reshape(shape),))


def concat(a: np.ndarray, b: np.ndarray, tape: GradTape | None = None) -> np.ndarray:
    """Concatenate along the last axis."""
    k = a.shape[-1]
    out = np.concatenate([a, b], axis=-1)
    return _maybe_record(tape, out, (a, b), lambda g, needs: (g[..., :k], g[..., k:]))


def weighted_sum(x: np.ndarray, weights: np.ndarray | None = None,
                 tape: GradTape | None = None) -> np.ndarray:
    """Scalar ``sum(x * weights)`` (plain sum when ``weights`` is None)."""
    w = np.ones_like(x) if weights is None else weights
    out = np.asarray(np.sum(x * w))
    return _maybe_record(tape, out, (x,), lambda g, needs: (g * w,))


# --------------------------------------------------------------------------
# Activations
# --------------------------------------------------------------------------

def _logistic(x):
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_vjp(p, g):
    return p * (g - (g * p).sum(axis=-1, keepdims=True))


def activate(kind: ActivationKind, x: np.ndarray, tape: GradTape | None = None) -> np.ndarray:
    """Apply an activation elementwise (softmax kinds act along the last axis).

    SIGMOID_EQ1 is exactly 0 for x <= 0 and has subgradient 0 there.
    SOFTMAX_EQ6_LITERAL zeroes components with x <= 0 without renormalizing.
    HARD_CLAMP_EQ8 has gradient 1 strictly inside (-1, 1) and 0 elsewhere.
    """
    x = np.asarray(x, dtype=np.float64)
    if kind.is_softmax:
        if x.ndim < 1:
            raise ShapeError("softmax requires a rank-1 input")
        if x.shape[-1] == 0:
            raise ShapeError("softmax on an empty vector")

    if kind is ActivationKind.IDENTITY:
        out = x.copy()
        vjp = lambda g, needs: (g,)
    elif kind is ActivationKind.SIGMOID_STANDARD:
        out = _logistic(x)
        vjp = lambda g, needs: (g * out * (1.0 - out),)
    elif kind is ActivationKind.SIGMOID_EQ1:
        pos = x > 0
        _note_branch(pos)
        out = np.where(pos, _logistic(x), 0.0)
        vjp = lambda g, needs: (np.where(pos, g * out * (1.0 - out), 0.0),)
    elif kind is ActivationKind.SOFTMAX_STANDARD:
        out = _softmax(x)
        vjp = lambda g, needs: (_softmax_vjp(out, g),)
    elif kind is ActivationKind.SOFTMAX_EQ6_LITERAL:
        pos = x > 0
        _note_branch(pos)
        p = _softmax(x)
        out = np.where(pos, p, 0.0)
        vjp = lambda g, needs: (_softmax_vjp(p, np.where(pos, g, 0.0)),)
    elif kind is ActivationKind.HARD_CLAMP_EQ8:
        inside = (x > -1.0) & (x < 1.0)
        _note_branch(np.sign(x) * ~inside)
        out = np.clip(x, -1.0, 1.0)
        vjp = lambda g, needs: (np.where(inside, g, 0.0),)
    else:  # pragma: no cover
        raise ValueError(f"unknown activation {kind}")
    return _maybe_record(tape, out, (x,), vjp)


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                          tape: GradTape | None = None) -> np.ndarray:
    """Mean cross-entropy of standard-softmax ``logits`` (N x K) against integer labels."""
    orig = logits
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = logits.shape[0]
    if labels.shape[0] != n:
        raise ShapeError(f"{labels.shape[0]} labels for {n} rows of logits")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = np.asarray(-logp[np.arange(n), labels].mean())

    def vjp(g, needs):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return ((g * p / n).reshape(orig.shape),)

    return _maybe_record(tape, out, (orig,), vjp)


def nll_from_probs(probs: np.ndarray, labels: np.ndarray, floor: float = 1e-12,
                   tape: GradTape | None = None) -> np.ndarray:
    """Mean negative log of already-activated class scores (used for non-standard heads)."""
    orig = probs
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = probs.shape[0]
    picked = np.maximum(probs[np.arange(n), labels], floor)
    out = np.asarray(-np.log(picked).mean())

    def vjp(g, needs):
        gp = np.zeros_like(probs)
        live = probs[np.arange(n), labels] > floor
        gp[np.arange(n), labels] = np.where(live, -g / (picked * n), 0.0)
        return (gp.reshape(orig.shape),)

    return _maybe_record(tape, out, (orig,), vjp)
