import numpy as np
import pytest
from hypothesis import given, strategies as st

from rcnn_fer.cnn import CnnConfig
from rcnn_fer.evaluation import (Counts, LinearBaseline, accuracy, class_counts, confusion, cross_validate,
                                 fit_baseline, mean_distribution, micro_accuracy, train_baseline)
from rcnn_fer.expressions import ExpressionClass as E, ExpressionDistribution, one_hot
from rcnn_fer.report import table2_timeline
from rcnn_fer.synthetic import synthetic_dataset
from rcnn_fer.training import TrainConfig


@pytest.mark.parametrize("c,want", [(Counts(5, 5, 0, 0), 1.0), (Counts(0, 0, 3, 2), 0.0),
                                    (Counts(40, 51, 5, 4), 0.91)])
def test_accuracy_examples(c, want):
    assert accuracy(c) == pytest.approx(want, abs=1e-15)


def test_accuracy_zero_denominator():
    with pytest.raises(ZeroDivisionError):
        accuracy(Counts(0, 0, 0, 0))


@given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
def test_accuracy_symmetric(tp, tn, fp, fn):
    if tp + tn + fp + fn:
        assert accuracy(Counts(tp, tn, fp, fn)) == accuracy(Counts(tn, tp, fp, fn))


def test_confusion_simple():
    assert np.array_equal(confusion(range(7), range(7)), np.eye(7, dtype=int))
    m = confusion([E.NEUTRAL], [E.DISGUST])
    assert m[E.DISGUST, E.NEUTRAL] == 1 and m.sum() == 1


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion([0, 1], [0])
    with pytest.raises(ValueError):
        confusion([7], [0])


def test_confusion_counts_match_tally(rng):
    pred, lab = rng.integers(0, 7, 100), rng.integers(0, 7, 100)
    m = confusion(pred, lab)
    assert m.sum() == 100
    assert micro_accuracy(m) == np.mean(pred == lab)
    for c in range(7):
        tp = fp = fn = tn = 0
        for p, y in zip(pred, lab):
            if p == c and y == c:
                tp += 1
            elif p == c:
                fp += 1
            elif y == c:
                fn += 1
            else:
                tn += 1
        assert class_counts(m, c) == Counts(tp, tn, fp, fn)


def test_mean_distribution():
    tl = table2_timeline()
    assert mean_distribution(tl.distributions)[E.NEUTRAL] == pytest.approx(0.2376875, abs=1e-12)
    d = mean_distribution([one_hot(E.DISGUST), one_hot(E.NEUTRAL)])
    assert d[E.DISGUST] == d[E.NEUTRAL] == 0.5 and d.scores.sum() == 1
    assert np.array_equal(mean_distribution([d, d]).scores, d.scores)
    with pytest.raises(ValueError):
        mean_distribution([])


@given(st.permutations(range(4)))
def test_mean_distribution_permutation(perm):
    ds = table2_timeline().distributions
    a = mean_distribution(ds).scores
    b = mean_distribution([ds[i] for i in perm]).scores
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_cross_validate_structure():
    data = synthetic_dataset(size=32, per_class=3)
    cfg = TrainConfig(epochs=1)
    cv = cross_validate(data, CnnConfig(input_size=32), cfg, k=3, seed=0)
    assert [f.fold for f in cv.folds] == [0, 1, 2]
    test_idx = np.concatenate([f.test_indices for f in cv.folds])
    assert sorted(test_idx) == list(range(len(data)))
    for f in cv.folds:
        np.testing.assert_array_equal(f.confusion.sum(axis=1), np.bincount(data.labels[f.test_indices], minlength=7))
        assert len(f.train_accuracy) == len(f.test_accuracy) == 1
    again = cross_validate(data, CnnConfig(input_size=32), cfg, k=3, seed=0)
    assert again.per_fold == cv.per_fold


def test_baseline_zero_epochs_uniform():
    data = synthetic_dataset(size=32, per_class=5)
    model, acc = train_baseline(data, TrainConfig(epochs=0))
    np.testing.assert_allclose(model.scores(data.images), 1 / 7)
    assert acc == pytest.approx(1 / 7, abs=0.05)


def test_baseline_deterministic_and_learns():
    data = synthetic_dataset(size=32, per_class=10)
    a, acc_a = train_baseline(data, TrainConfig(epochs=3))
    b, acc_b = train_baseline(data, TrainConfig(epochs=3))
    assert np.array_equal(a.weights, b.weights) and acc_a == acc_b
    assert acc_a >= 0.8
