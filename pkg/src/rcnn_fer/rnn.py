"""Recurrent temporal predictor over expression distributions, plus timeline analysis.

The cell computes, with row vectors,

    S_t = g_f(x_t U + S_{t-1} W + b_f)
    O_t = g_o(S_t V + b_o)

where g_f is the hard clamp to [-1, 1] and g_o a softmax. Zero biases give
the bias-free form of the same recurrence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .expressions import N_CLASSES, ExpressionClass, ExpressionDistribution
from .tensor import ActivationKind, GradTape
from .training import Sgd, TrainConfig, TrainingError, epoch_rng, glorot_uniform, shuffle_batches

DEFAULT_HIDDEN = 16
PARAM_NAMES = ("U", "W", "V", "b_f", "b_o")


@dataclass
class RnnCell:
    U: np.ndarray    # 7 x h, input weights
    W: np.ndarray    # h x h, recurrent weights
    V: np.ndarray    # h x 7, output weights
    b_f: np.ndarray  # h
    b_o: np.ndarray  # 7
    hidden_activation: ActivationKind = ActivationKind.HARD_CLAMP_EQ8
    output_activation: ActivationKind = ActivationKind.SOFTMAX_STANDARD

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64))
        h = self.hidden_size
        want = {"U": (N_CLASSES, h), "W": (h, h), "V": (h, N_CLASSES), "b_f": (h,), "b_o": (N_CLASSES,)}
        for name, shape in want.items():
            if getattr(self, name).shape != shape:
                raise T.ShapeError(f"{name} must have shape {shape}, got {getattr(self, name).shape}")
        if not self.output_activation.is_softmax:
            raise ValueError("output activation must be a softmax kind")

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0]

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def with_params(self, params: dict[str, np.ndarray]) -> "RnnCell":
        return RnnCell(**{n: params[n] for n in PARAM_NAMES},
                       hidden_activation=self.hidden_activation, output_activation=self.output_activation)


def init_cell(hidden: int = DEFAULT_HIDDEN, seed: int = 0, **kinds) -> RnnCell:
    rng = np.random.default_rng(seed)
    return RnnCell(
        U=glorot_uniform(rng, (N_CLASSES, hidden), N_CLASSES, hidden),
        W=glorot_uniform(rng, (hidden, hidden), hidden, hidden),
        V=glorot_uniform(rng, (hidden, N_CLASSES), hidden, N_CLASSES),
        b_f=np.zeros(hidden), b_o=np.zeros(N_CLASSES), **kinds)


def zero_cell(hidden: int = DEFAULT_HIDDEN) -> RnnCell:
    return RnnCell(np.zeros((N_CLASSES, hidden)), np.zeros((hidden, hidden)),
                   np.zeros((hidden, N_CLASSES)), np.zeros(hidden), np.zeros(N_CLASSES))


@dataclass(frozen=True)
class RnnState:
    S: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, hidden: int) -> "RnnState":
        return cls(np.zeros(hidden), 0)


def _as_vector(x) -> np.ndarray:
    v = x.scores if isinstance(x, ExpressionDistribution) else np.asarray(x, dtype=np.float64)
    if v.shape != (N_CLASSES,):
        raise T.ShapeError(f"expected a {N_CLASSES}-vector input, got shape {v.shape}")
    return v


def _cell_step(p, kinds, x, s_prev, tape=None):
    a = T.add(T.dense(x, p["U"], p["b_f"], tape=tape), T.dense(s_prev, p["W"], np.zeros(len(p["b_f"])), tape=tape), tape=tape)
    s = T.activate(kinds[0], a, tape=tape)
    logits = T.dense(s, p["V"], p["b_o"], tape=tape)
    return s, logits, T.activate(kinds[1], logits, tape=tape)


def rnn_step(cell: RnnCell, x_t, s_prev: RnnState) -> tuple[RnnState, ExpressionDistribution]:
    """One recurrence step; returns the new state and the output distribution."""
    x = _as_vector(x_t)
    if s_prev.S.shape != (cell.hidden_size,):
        raise T.ShapeError(f"state has {s_prev.S.shape} components, cell expects {cell.hidden_size}")
    s, _, o = _cell_step(cell.params, (cell.hidden_activation, cell.output_activation), x, s_prev.S)
    normalized = cell.output_activation is ActivationKind.SOFTMAX_STANDARD
    return RnnState(s, s_prev.t + 1), ExpressionDistribution(o, normalized=normalized)


def run_sequence(cell: RnnCell, xs) -> tuple[RnnState, list[ExpressionDistribution]]:
    state = RnnState.initial(cell.hidden_size)
    outs = []
    for x in xs:
        state, o = rnn_step(cell, x, state)
        outs.append(o)
    return state, outs


def sequence_loss(cell: RnnCell, seq: np.ndarray, targets: np.ndarray, params=None, tape=None):
    """Mean next-step cross-entropy over one unrolled sequence; also returns the outputs."""
    p = cell.params if params is None else params
    kinds = (cell.hidden_activation, cell.output_activation)
    s = np.zeros(cell.hidden_size)
    logits, outs = [], []
    for x in seq:
        s, lg, o = _cell_step(p, kinds, x, s, tape=tape)
        logits.append(lg)
        outs.append(o)
    # per-step losses summed through the tape, then averaged
    total = None
    for lg, o, y in zip(logits, outs, targets):
        if cell.output_activation is ActivationKind.SOFTMAX_STANDARD:
            step = T.softmax_cross_entropy(lg, np.array([y]), tape=tape)
        else:
            step = T.nll_from_probs(o, np.array([y]), tape=tape)
        total = step if total is None else T.add(total, step, tape=tape)
    loss = T.weighted_sum(total, np.asarray(1.0 / len(targets)), tape=tape)
    return loss, np.array(outs)


def _sequence_pairs(seq) -> tuple[np.ndarray, np.ndarray]:
    arr = np.array([_as_vector(x) for x in seq])
    if len(arr) < 2:
        raise TrainingError(f"sequences need at least 2 steps, got {len(arr)}")
    return arr[:-1], np.argmax(arr[1:], axis=1)


@dataclass(frozen=True)
class RnnEpoch:
    epoch: int
    loss: float
    accuracy: float


def train_rnn(cell: RnnCell, sequences: Sequence, config: TrainConfig = TrainConfig()
              ) -> tuple[RnnCell, list[RnnEpoch]]:
    """Backpropagation through each full sequence; the target at step t is the
    dominant class of step t + 1. ``batch_size`` counts sequences per update."""
    pairs = [_sequence_pairs(s) for s in sequences]
    if not pairs:
        raise TrainingError("no sequences to train on")
    params = {k: v.copy() for k, v in cell.params.items()}
    opt = Sgd(config)
    rng = epoch_rng(config.seed)
    history = []
    n_steps = sum(len(t) for _, t in pairs)
    for epoch in range(config.effective_epochs):
        total, correct = 0.0, 0
        for batch in shuffle_batches(len(pairs), config.batch_size, rng):
            grads_sum = {k: np.zeros_like(v) for k, v in params.items()}
            for i in batch:
                xs, ys = pairs[i]
                tape = GradTape()
                watched = {k: tape.watch(k, v) for k, v in params.items()}
                loss, outs = sequence_loss(cell, xs, ys, watched, tape)
                if not np.isfinite(float(loss)):
                    raise TrainingError(f"non-finite loss at epoch {epoch + 1}, sequence {i}")
                for k, g in tape.backward(loss).items():
                    grads_sum[k] += g / len(batch)
                total += float(loss) * len(ys)
                correct += int((outs.argmax(axis=1) == ys).sum())
            opt.step(params, grads_sum)
        history.append(RnnEpoch(epoch + 1, total / n_steps, correct / n_steps))
    return cell.with_params(params), history


def next_step_accuracy(cell: RnnCell, sequences: Sequence) -> float:
    correct = total = 0
    for seq in sequences:
        xs, ys = _sequence_pairs(seq)
        _, outs = run_sequence(cell, xs)
        pred = np.array([o.dominant() for o in outs])
        correct += int((pred == ys).sum())
        total += len(ys)
    return correct / total


# --------------------------------------------------------------------------
# Next-state predictor
# --------------------------------------------------------------------------

@dataclass
class NextStatePredictor:
    """x_{t+1} = clamp(f(x_t) + g(x_t)) with affine f(x) = W_f x + c_f, g(x) = W_g x + c_g."""
    W_f: np.ndarray
    c_f: np.ndarray
    W_g: np.ndarray
    c_g: np.ndarray

    @classmethod
    def zeros(cls) -> "NextStatePredictor":
        z = np.zeros((N_CLASSES, N_CLASSES))
        return cls(z, np.zeros(N_CLASSES), z.copy(), np.zeros(N_CLASSES))


def predict_next(pred: NextStatePredictor, x_t) -> np.ndarray:
    x = _as_vector(x_t)
    return T.activate(ActivationKind.HARD_CLAMP_EQ8, (pred.W_f @ x + pred.c_f) + (pred.W_g @ x + pred.c_g))


# --------------------------------------------------------------------------
# Timelines
# --------------------------------------------------------------------------

@dataclass
class EmotionTimeline:
    timestamps: list[float]
    distributions: list[ExpressionDistribution]
    spacing: float | None = None
    predicted_next: ExpressionDistribution | None = None

    def __post_init__(self):
        if len(self.timestamps) != len(self.distributions):
            raise ValueError("timestamps and distributions differ in length")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("timeline timestamps must be strictly increasing")

    def __len__(self):
        return len(self.timestamps)

    def matrix(self) -> np.ndarray:
        return np.array([d.scores for d in self.distributions]).reshape(-1, N_CLASSES)


FrameScorer = Callable[[object], ExpressionDistribution]


def _frame_scorer(model) -> FrameScorer:
    from .cnn import CnnModel, forward
    from .images import preprocess

    if isinstance(model, CnnModel):
        size = model.config.input_size
        return lambda frame: forward(model, preprocess(frame.pixels, size))
    if callable(model):
        return model
    raise TypeError(f"expected a CnnModel or a frame -> distribution callable, got {type(model).__name__}")


def build_timeline(model, cell: RnnCell | None, frame_windows: Sequence[tuple[float, Sequence]],
                   spacing: float | None = None) -> EmotionTimeline:
    """Average per-frame distributions in each ``(timestamp, frames)`` window.

    ``model`` is a CnnModel or any callable scoring one frame. When ``cell`` is
    given, its output after consuming every window becomes ``predicted_next``.
    """
    score = _frame_scorer(model)
    stamps, dists = [], []
    for ts, frames in frame_windows:
        if len(frames) == 0:
            raise ValueError(f"window at {ts:g}s has no frames")
        per = [score(f) for f in frames]
        mean = np.mean([d.scores for d in per], axis=0)
        dists.append(ExpressionDistribution(mean, normalized=all(d.normalized for d in per)))
        stamps.append(float(ts))
    nxt = None
    if cell is not None and dists:
        _, outs = run_sequence(cell, dists)
        nxt = outs[-1]
    return EmotionTimeline(stamps, dists, spacing, nxt)


@dataclass(frozen=True)
class Transition:
    source: ExpressionClass
    target: ExpressionClass
    timestamp: float


@dataclass
class ShiftReport:
    dominants: list[ExpressionClass]
    transitions: list[Transition]
    deltas: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES))


def _check_len(timeline: EmotionTimeline):
    if len(timeline) < 2:
        raise ValueError(f"shift analysis needs at least 2 timeline entries, got {len(timeline)}")


def detect_shift(timeline: EmotionTimeline) -> ShiftReport:
    _check_len(timeline)
    dom = [d.dominant() for d in timeline.distributions]
    trans = [Transition(a, b, timeline.timestamps[i + 1])
             for i, (a, b) in enumerate(zip(dom, dom[1:])) if a != b]
    m = timeline.matrix()
    return ShiftReport(dom, trans, m[-1] - m[0])


def smoothness(timeline: EmotionTimeline) -> int:
    """Largest previous-window rank of an incoming dominant class (1 = it was
    runner-up); 0 when the dominant class never changes."""
    report = detect_shift(timeline)
    worst = 0
    for i in range(1, len(timeline)):
        incoming = report.dominants[i]
        if incoming != report.dominants[i - 1]:
            worst = max(worst, timeline.distributions[i - 1].ranking().index(incoming))
    return worst
