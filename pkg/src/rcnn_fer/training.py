"""Training configuration and the SGD update shared by every trainable model."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

OPTIMIZERS = ("sgd", "sgd-momentum")
MOMENTUM = 0.9


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 5
    batch_size: int = 16
    seed: int = 0
    optimizer: str = "sgd-momentum"
    # Hard ceiling on epochs regardless of ``epochs``; None means no cap.
    epoch_cap: int | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")

    @property
    def effective_epochs(self) -> int:
        return self.epochs if self.epoch_cap is None else min(self.epochs, self.epoch_cap)

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


class Sgd:
    """Plain or heavy-ball SGD over a dict of float64 arrays, updated in place."""

    def __init__(self, config: TrainConfig):
        self.lr = config.learning_rate
        self.momentum = MOMENTUM if config.optimizer == "sgd-momentum" else 0.0
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name in sorted(grads):
            g = grads[name]
            if self.momentum:
                v = self._velocity.get(name)
                v = g.copy() if v is None else self.momentum * v + g
                self._velocity[name] = v
                g = v
            params[name] -= self.lr * g


def shuffle_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def epoch_rng(seed: int) -> np.random.Generator:
    """RNG for data order, independent of the one used for initialization."""
    return np.random.default_rng(np.random.SeedSequence([seed, 1]))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
