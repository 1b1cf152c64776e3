"""The seven expression classes and score vectors over them."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ExpressionClass(enum.IntEnum):
    ANGER = 0
    DISGUST = 1
    FEAR = 2
    HAPPY = 3
    SADNESS = 4
    NEUTRAL = 5
    SLEEP = 6

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "ExpressionClass":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown expression label {text!r}; valid labels: {', '.join(CLASS_NAMES)}") from None


CLASS_NAMES = tuple(c.label for c in ExpressionClass)
N_CLASSES = len(CLASS_NAMES)


@dataclass(frozen=True)
class ExpressionDistribution:
    """Seven scores in :class:`ExpressionClass` order.

    Normalized distributions must sum to 1 within 1e-6. Unnormalized ones
    (literal softmax output, bundled reference scores) only need scores in [0, 1.1].
    """

    scores: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64).reshape(-1)
        if s.shape != (N_CLASSES,):
            raise ValueError(f"expected {N_CLASSES} scores, got {s.size}")
        if not np.all(np.isfinite(s)):
            raise ValueError("scores must be finite")
        if self.normalized:
            if np.any(s < -1e-12) or np.any(s > 1 + 1e-12) or abs(s.sum() - 1.0) > 1e-6:
                raise ValueError(f"normalized scores must lie in [0,1] and sum to 1, got sum {s.sum():.9f}")
        elif np.any(s < 0) or np.any(s > 1.1):
            raise ValueError("unnormalized scores must lie in [0, 1.1]")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def __getitem__(self, cls) -> float:
        return float(self.scores[int(cls)])

    def dominant(self) -> ExpressionClass:
        # np.argmax returns the first maximum, i.e. the lowest class index on ties.
        return ExpressionClass(int(np.argmax(self.scores)))

    def ranking(self) -> list[ExpressionClass]:
        """Classes by descending score; ties keep class order."""
        order = np.argsort(-self.scores, kind="stable")
        return [ExpressionClass(int(i)) for i in order]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(CLASS_NAMES, map(float, self.scores)))


def one_hot(cls) -> ExpressionDistribution:
    v = np.zeros(N_CLASSES)
    v[int(cls)] = 1.0
    return ExpressionDistribution(v)


def uniform() -> ExpressionDistribution:
    return ExpressionDistribution(np.full(N_CLASSES, 1.0 / N_CLASSES))
