"""Accuracy, confusion matrices, k-fold cross-validation and a linear pixel baseline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .cnn import CnnConfig, EpochMetrics, build_model, predict_scores, train
from .data import Dataset, kfold_indices, split_indices
from .expressions import N_CLASSES, ExpressionDistribution
from .rnn import build_timeline
from .tensor import GradTape
from .training import Sgd, TrainConfig, TrainingError, epoch_rng, shuffle_batches


@dataclass(frozen=True)
class Counts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def accuracy(counts: Counts) -> float:
    """(TP + TN) / (TP + TN + FP + FN)."""
    if counts.total == 0:
        raise ZeroDivisionError("accuracy of zero evaluated samples is undefined")
    return (counts.tp + counts.tn) / counts.total


def confusion(predictions, labels) -> np.ndarray:
    """7 x 7 counts; cell (i, j) is true class i predicted as j."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError(f"{predictions.size} predictions for {labels.size} labels")
    for arr in (predictions, labels):
        if arr.size and (arr.min() < 0 or arr.max() >= N_CLASSES):
            raise ValueError(f"class indices must lie in 0..{N_CLASSES - 1}")
    m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(m, (labels, predictions), 1)
    return m


def class_counts(matrix: np.ndarray, cls) -> Counts:
    """One-vs-rest counts for ``cls`` read off a confusion matrix."""
    c = int(cls)
    tp = int(matrix[c, c])
    fn = int(matrix[c].sum()) - tp
    fp = int(matrix[:, c].sum()) - tp
    return Counts(tp, int(matrix.sum()) - tp - fn - fp, fp, fn)


def micro_accuracy(matrix: np.ndarray) -> float:
    total = matrix.sum()
    if total == 0:
        raise ZeroDivisionError("empty confusion matrix")
    return float(np.trace(matrix) / total)


def mean_distribution(dists: Sequence[ExpressionDistribution]) -> ExpressionDistribution:
    if len(dists) == 0:
        raise ValueError("mean of an empty list of distributions")
    mean = np.mean([d.scores for d in dists], axis=0)
    return ExpressionDistribution(mean, normalized=all(d.normalized for d in dists))


# --------------------------------------------------------------------------
# Cross-validation
# --------------------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    train_accuracy: list[float]
    test_accuracy: list[float]  # after each epoch; the last entry is the fold's score
    confusion: np.ndarray
    test_indices: np.ndarray

    @property
    def final_test_accuracy(self) -> float:
        return self.test_accuracy[-1]


@dataclass
class CvSummary:
    folds: list[FoldResult]
    mean_test_accuracy: float
    per_fold: list[float] = field(default_factory=list)

    def mean_epoch_curve(self) -> list[float]:
        return list(np.mean([f.train_accuracy for f in self.folds], axis=0))


def evaluate(model, data: Dataset) -> tuple[float, np.ndarray]:
    pred = predict_scores(model, data.images, data.aux).argmax(axis=1)
    m = confusion(pred, data.labels)
    return micro_accuracy(m), m


def cross_validate(data: Dataset, model_config: CnnConfig = CnnConfig(input_size=32),
                   train_config: TrainConfig = TrainConfig(), k: int = 5, seed: int = 0) -> CvSummary:
    """Train one model per fold from the same initial weights; each fold is
    held out exactly once."""
    folds = kfold_indices(data.labels, k, seed)
    results = []
    for i, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(data)), test_idx)
        tr, te = data.subset(train_idx), data.subset(test_idx)
        test_curve = []
        model, hist = train(build_model(model_config), tr.images, tr.labels, train_config, tr.aux,
                            on_epoch=lambda m, _: test_curve.append(evaluate(m, te)[0]))
        if not test_curve:  # zero-epoch run
            test_curve.append(evaluate(model, te)[0])
        _, mat = evaluate(model, te)
        results.append(FoldResult(i, [h.accuracy for h in hist], test_curve, mat, test_idx))
    per_fold = [r.final_test_accuracy for r in results]
    return CvSummary(results, float(np.mean(per_fold)), per_fold)


# --------------------------------------------------------------------------
# Linear pixel baseline
# --------------------------------------------------------------------------

@dataclass
class LinearBaseline:
    weights: np.ndarray  # D x 7
    bias: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "LinearBaseline":
        return cls(np.zeros((dim, N_CLASSES)), np.zeros(N_CLASSES))

    def scores(self, images: np.ndarray) -> np.ndarray:
        x = images.reshape(len(images), -1)
        return T.activate(T.ActivationKind.SOFTMAX_STANDARD, T.dense(x, self.weights, self.bias))

    def predict(self, images: np.ndarray) -> np.ndarray:
        return self.scores(images).argmax(axis=1)


def fit_baseline(images: np.ndarray, labels, config: TrainConfig = TrainConfig()) -> LinearBaseline:
    """Flattened pixels -> 7 softmax, cross-entropy, zero-initialized."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise TrainingError("cannot train on an empty dataset")
    x = images.reshape(len(images), -1)
    params = {"weights": np.zeros((x.shape[1], N_CLASSES)), "bias": np.zeros(N_CLASSES)}
    opt = Sgd(config)
    rng = epoch_rng(config.seed)
    for _ in range(config.effective_epochs):
        for idx in shuffle_batches(len(x), config.batch_size, rng):
            tape = GradTape()
            w = tape.watch("weights", params["weights"])
            b = tape.watch("bias", params["bias"])
            loss = T.softmax_cross_entropy(T.dense(x[idx], w, b, tape=tape), labels[idx], tape=tape)
            if not np.isfinite(float(loss)):
                raise TrainingError("non-finite baseline loss")
            opt.step(params, tape.backward(loss))
    return LinearBaseline(params["weights"], params["bias"])


def train_baseline(data: Dataset, config: TrainConfig = TrainConfig(), ratio: float = 0.8
                   ) -> tuple[LinearBaseline, float]:
    """Fit on a stratified ``ratio`` split (seeded by ``config.seed``) and score the held-out part."""
    tr_idx, te_idx = split_indices(data.labels, ratio, config.seed)
    model = fit_baseline(data.images[tr_idx], data.labels[tr_idx], config)
    acc = float((model.predict(data.images[te_idx]) == data.labels[te_idx]).mean())
    return model, acc


def window_accuracy(model, data: Dataset, window: int = 3) -> float:
    """R-CNN style accuracy: same-class test images are grouped into windows of
    ``window`` frames, each window's mean distribution is classified by its
    dominant class."""
    correct = total = 0
    for c in range(N_CLASSES):
        idx = np.flatnonzero(data.labels == c)
        if len(idx) == 0:
            continue
        scores = predict_scores(model, data.images[idx])
        dists = [ExpressionDistribution(s) for s in scores]
        groups = [dists[i:i + window] for i in range(0, len(dists), window)]
        tl = build_timeline(lambda d: d, None, [(float(i), g) for i, g in enumerate(groups)])
        correct += sum(int(d.dominant()) == c for d in tl.distributions)
        total += len(groups)
    return correct / total


def compare_models(data: Dataset, model_config: CnnConfig = CnnConfig(input_size=32),
                   config: TrainConfig = TrainConfig(), ratio: float = 0.8
                   ) -> tuple[dict[str, float], list[EpochMetrics]]:
    """Baseline, CNN and windowed R-CNN accuracy on one shared stratified split."""
    tr_idx, te_idx = split_indices(data.labels, ratio, config.seed)
    tr, te = data.subset(tr_idx), data.subset(te_idx)
    _, base_acc = train_baseline(data, config, ratio)
    model, hist = train(build_model(model_config), tr.images, tr.labels, config, tr.aux)
    cnn_acc, _ = evaluate(model, te)
    return {"baseline": base_acc, "cnn": cnn_acc, "rcnn": window_accuracy(model, te)}, hist
