"""End-to-end acceptance checks, one per criterion.

Each test records a single ``PASS``/``FAIL`` line before asserting; the lines
are printed together in the pytest terminal summary. Run directly with
``python tests/test_acceptance.py``.
"""
import os
import sys
import time

import numpy as np
import pytest

from rcnn_fer import report as R
from rcnn_fer import tensor as T
from rcnn_fer.checkpoint import (BadMagicError, ShapeMismatchError, TruncatedCheckpointError, decode, encode,
                                 load_checkpoint, save_checkpoint)
from rcnn_fer.checks import gradient_suite, oracle_suite
from rcnn_fer.cnn import CnnConfig, build_model, predict_scores, train
from rcnn_fer.data import kfold_indices, split_indices
from rcnn_fer.evaluation import compare_models, cross_validate
from rcnn_fer.expressions import ExpressionClass as E, one_hot
from rcnn_fer.rnn import build_timeline, detect_shift, init_cell, next_step_accuracy, smoothness, train_rnn
from rcnn_fer.synthetic import make_dataset, synthetic_dataset, templates
from rcnn_fer.tensor import ActivationKind as A
from rcnn_fer.training import TrainConfig

sys.path.insert(0, os.path.dirname(__file__))
from conftest import VERDICTS  # noqa: E402


def verdict(n, title, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} [{n:2d}] {title}" + (f": {detail}" if detail else "")
    test_name = sys._getframe(1).f_code.co_name
    VERDICTS[f"{__name__}::{test_name}"] = line
    return ok


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


# -- 1 ---------------------------------------------------------------------

def test_01_oracle_equivalence():
    results, secs = timed(oracle_suite, cases=100, seed=0)
    ok = all(r.passed for r in results) and secs < 30
    detail = "; ".join(f"{r.name.split()[1]} {r.value:.1e}" for r in results) + f"; {secs:.1f}s"
    assert verdict(1, "primitives match brute-force oracles (100 cases)", ok, detail)


# -- 2 ---------------------------------------------------------------------

def test_02_gradient_soundness():
    results, secs = timed(gradient_suite, seed=0)
    net = [r for r in results if "cnn" in r.name or "rnn" in r.name]
    ok = all(r.passed for r in results) and len(net) == 3 and secs < 120
    worst = max(r.value for r in results)
    assert verdict(2, "CNN reduced-32 and RNN gradients vs central differences",
                   ok, f"max rel err {worst:.2e} (< 1e-4); {secs:.1f}s")


# -- 3 ---------------------------------------------------------------------

def test_03_activation_fidelity():
    rng = np.random.default_rng(3)
    checks = []
    eq1 = T.activate(A.SIGMOID_EQ1, np.array([-5.0, 0.0, 1.0]))
    checks.append(eq1[0] == 0.0 and eq1[1] == 0.0 and abs(eq1[2] - 0.7310585786) < 1e-10)
    checks.append(np.allclose(T.activate(A.SOFTMAX_STANDARD, np.zeros(7)), 1 / 7, atol=1e-15))
    checks.append(np.round(T.activate(A.SOFTMAX_STANDARD, np.array([1.0, 2, 3])), 6).tolist()
                  == [0.090031, 0.244728, 0.665241])
    checks.append(T.activate(A.HARD_CLAMP_EQ8, np.array([0.5, -2.0, 7.0])).tolist() == [0.5, -1.0, 1.0])
    for _ in range(200):
        x = rng.normal(0, 4, size=int(rng.integers(1, 12)))
        std = T.activate(A.SOFTMAX_STANDARD, x)
        lit = T.activate(A.SOFTMAX_EQ6_LITERAL, x)
        clamp = T.activate(A.HARD_CLAMP_EQ8, x)
        sig = T.activate(A.SIGMOID_EQ1, x)
        checks += [
            abs(std.sum() - 1) <= 1e-9 and np.all(std > 0) and np.all(std < 1) if len(x) > 1 else True,
            np.all(lit[x <= 0] == 0.0) and np.array_equal(lit[x > 0], std[x > 0]) and np.all(lit <= std),
            np.array_equal(T.activate(A.HARD_CLAMP_EQ8, clamp), clamp) and np.all(clamp[np.abs(x) < 1] == x[np.abs(x) < 1]),
            np.all(sig[x <= 0] == 0.0) and np.all(sig[x > 1e-15] > 0.5) and np.all(sig <= 1),
        ]
    ok = all(bool(c) for c in checks)
    assert verdict(3, "activation examples and invariants (all four formula kinds)", ok, f"{len(checks)} checks")


# -- 4 ---------------------------------------------------------------------

def test_04_table1_fixture():
    d = R.table1_distribution()
    ranking = [c.label for c in d.ranking()]
    ok = d.dominant() is E.DISGUST and ranking == ["disgust", "neutral", "happy", "sadness", "fear", "sleep",
                                                   "anger"]
    assert verdict(4, "bundled single-frame fixture classifies as disgust with expected ranking", ok, " > ".join(ranking))


# -- 5 ---------------------------------------------------------------------

def test_05_table2_fixture(tmp_path):
    ref = R.table2_timeline()
    tl = build_timeline(lambda d: d, None, [(ts, [d]) for ts, d in zip(ref.timestamps, ref.distributions)])
    R.write_table2_csv(tl, tmp_path / "t2.csv")
    rows = (tmp_path / "t2.csv").read_text().splitlines()
    want = ["t,0.036045,0.277319,0.129893,0.144559,0.141052,0.203560,0.070315",
            "t+10s,0.036154,0.223589,0.127850,0.162430,0.139840,0.234870,0.079840",
            "t+20s,0.046045,0.207319,0.129893,0.154455,0.151052,0.253560,0.083145",
            "t+30s,0.043152,0.184560,0.123890,0.156711,0.149986,0.258760,0.102457"]
    rep = detect_shift(tl)
    trans = [(t.source, t.target) for t in rep.transitions]
    ok = (rows[1:] == want and trans == [(E.DISGUST, E.NEUTRAL)]
          and R.fmt(rep.deltas[E.NEUTRAL]) == "0.055200" and smoothness(tl) == 1)
    assert verdict(5, "bundled four-window fixture timeline, shift and smoothness", ok,
                   f"shift disgust->neutral, neutral delta +{R.fmt(rep.deltas[E.NEUTRAL])}, smoothness {smoothness(tl)}")


# -- 6 and 9 ---------------------------------------------------------------

def run_cv(out):
    data = synthetic_dataset(size=32, per_class=40, noise=0.05, seed=0)
    cv = cross_validate(data, CnnConfig(input_size=32), TrainConfig(), k=5, seed=0)
    out.mkdir(parents=True, exist_ok=True)
    R.write_fold_csv(cv.folds, out / "folds.csv")
    R.write_epochs_csv(cv.mean_epoch_curve(), out / "fig7_epochs.csv")
    return cv


def run_rnn(out):
    seq = [one_hot([E.DISGUST, E.NEUTRAL, E.HAPPY][i % 3]).scores for i in range(30)]
    cell, hist = train_rnn(init_cell(16, 0), [seq], TrainConfig(epochs=200))
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(cell, out / "cell.ckpt")
    R.write_epochs_csv([h.accuracy for h in hist], out / "rnn_epochs.csv")
    return next_step_accuracy(cell, [seq])


def near_monotone(curve, dip=0.02):
    drops = [a - b for a, b in zip(curve, curve[1:]) if b < a]
    return len(drops) <= 1 and all(d <= dip for d in drops)


@pytest.fixture(scope="module")
def first_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("run_a")
    cv, cv_secs = timed(run_cv, base)
    acc, rnn_secs = timed(run_rnn, base)
    return base, cv, cv_secs, acc, rnn_secs


def test_06_synthetic_end_to_end(first_runs):
    _, cv, secs, _, _ = first_runs
    imgs, _ = make_dataset(per_class=40)
    tpl = templates()
    distinct = all(not np.array_equal(tpl[i], tpl[j]) for i in range(7) for j in range(i))
    curves = [f.train_accuracy for f in cv.folds]
    shape_ok = all(near_monotone(c) for c in curves) and near_monotone(cv.mean_epoch_curve())
    ok = (imgs.shape == (280, 64, 64, 1) and distinct and cv.mean_test_accuracy >= 0.90
          and all(len(c) == 5 for c in curves) and shape_ok and secs < 300)
    curve = ", ".join(f"{a:.3f}" for a in cv.mean_epoch_curve())
    assert verdict(6, "synthetic 5-fold CV on reduced-32", ok,
                   f"mean test acc {cv.mean_test_accuracy:.4f} (>= 0.90); train curve [{curve}]; {secs:.0f}s")


# -- 7 ---------------------------------------------------------------------

def test_07_rnn_memorization(first_runs):
    _, _, _, acc, secs = first_runs
    ok = acc >= 0.95 and secs < 60
    assert verdict(7, "RNN memorizes the 3-cycle", ok, f"next-step acc {acc:.3f} (>= 0.95); {secs:.1f}s")


# -- 8 ---------------------------------------------------------------------

def test_08_partitions():
    ok = True
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(30, 400))
        labels = rng.integers(0, 7, size=n)
        labels[:14] = np.repeat(np.arange(7), 2)
        tr, te = split_indices(labels, 0.8, seed)
        ok &= not set(tr) & set(te) and sorted(np.concatenate([tr, te])) == list(range(n))
        ok &= abs(len(tr) - 0.8 * n) <= 7  # per-class rounding
        folds = kfold_indices(labels, 5, seed)
        sizes = [len(f) for f in folds]
        ok &= max(sizes) - min(sizes) <= 1 and sorted(np.concatenate(folds)) == list(range(n))
        again = kfold_indices(labels, 5, seed)
        ok &= all(np.array_equal(a, b) for a, b in zip(folds, again))
    sizes304 = sorted((len(f) for f in kfold_indices(np.random.default_rng(0).integers(0, 7, 304), 5, 0)),
                      reverse=True)
    ok &= sizes304 == [61, 61, 61, 61, 60]
    assert verdict(8, "split and kfold partition invariants over 50 seeds", bool(ok), f"kfold(304) {sizes304}")


# -- 9 ---------------------------------------------------------------------

def test_09_determinism(first_runs, tmp_path):
    base_a = first_runs[0]
    run_cv(tmp_path)
    run_rnn(tmp_path)
    names = ["folds.csv", "fig7_epochs.csv", "cell.ckpt", "rnn_epochs.csv"]
    same = [(base_a / n).read_bytes() == (tmp_path / n).read_bytes() for n in names]
    assert verdict(9, "repeat runs give byte-identical report files", all(same),
                   ", ".join(f"{n} {'=' if s else '!='}" for n, s in zip(names, same)))


# -- 10 --------------------------------------------------------------------

def test_10_checkpoint_round_trip(tmp_path):
    data = synthetic_dataset(size=32, per_class=1)
    model, _ = train(build_model(CnnConfig(input_size=32)), data.images, data.labels, TrainConfig(epochs=1))
    save_checkpoint(model, tmp_path / "m.ckpt")
    xs = np.random.default_rng(10).uniform(size=(10, 32, 32, 1))
    diff = np.abs(predict_scores(load_checkpoint(tmp_path / "m.ckpt"), xs) - predict_scores(model, xs)).max()

    raw = encode(model)
    magic, header, payload = raw.split(b"\n", 2)
    caught = set()
    for bad in (b"XXXX" + raw[4:], raw[:-1], magic + b"\n" + header.replace(b"[3, 3, 1, 32]", b"[3, 3, 2, 32]")
                + b"\n" + payload):
        try:
            decode(bad)
        except (BadMagicError, TruncatedCheckpointError, ShapeMismatchError) as e:
            caught.add(type(e))
    ok = diff <= 1e-6 and caught == {BadMagicError, TruncatedCheckpointError, ShapeMismatchError}
    assert verdict(10, "checkpoint round-trip and corruption errors", ok,
                   f"max diff {diff:.1e}; {len(caught)} distinct errors")


# -- 11 --------------------------------------------------------------------

def test_11_comparison_shape(tmp_path):
    data = synthetic_dataset(size=32, per_class=40, seed=0)
    acc, _ = compare_models(data, CnnConfig(input_size=32), TrainConfig())
    R.emit_plot_data(tmp_path, comparison=acc)
    rows = (tmp_path / "fig8_comparison.csv").read_text().splitlines()
    ok = acc["baseline"] <= acc["cnn"] and len(rows) == 4 and [r.split(",")[0] for r in rows[1:]] == [
        "baseline", "cnn", "rcnn"]
    assert verdict(11, "baseline <= CNN and three comparison rows", ok,
                   ", ".join(f"{k} {v:.3f}" for k, v in acc.items()))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
