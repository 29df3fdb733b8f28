"""Survival curves and the mergeable accumulators behind them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MomentAccumulator:
    """Per-grid-point count, sum and sum of squares; merge is associative."""

    count: int
    total: np.ndarray
    total_sq: np.ndarray

    @classmethod
    def empty(cls, size: int) -> "MomentAccumulator":
        return cls(0, np.zeros(size), np.zeros(size))

    @classmethod
    def of(cls, values: np.ndarray) -> "MomentAccumulator":
        """Accumulate a (replicas, grid) array of per-replica values."""
        return cls(values.shape[0], values.sum(axis=0), (values * values).sum(axis=0))

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        return MomentAccumulator(self.count + other.count, self.total + other.total,
                                 self.total_sq + other.total_sq)

    def mean(self) -> np.ndarray:
        return self.total / self.count

    def stderr(self) -> np.ndarray:
        m = self.mean()
        if self.count < 2:
            return np.zeros_like(m)
        var = (self.total_sq - self.count * m * m) / (self.count - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.count)


def merge_all(parts) -> MomentAccumulator:
    parts = list(parts)
    out = parts[0]
    for part in parts[1:]:
        out = out.merge(part)
    return out


@dataclass
class SurvivalCurve:
    """Estimated survival probabilities on an increasing time grid."""

    n: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    replicas: int
    meta: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        self.estimate = np.asarray(self.estimate, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if self.n.ndim != 1 or np.any(np.diff(self.n) <= 0):
            raise ValueError("curve grid must be strictly increasing")

    def __len__(self) -> int:
        return self.n.shape[0]

    @classmethod
    def from_accumulator(cls, n_grid, acc: MomentAccumulator, meta=None) -> "SurvivalCurve":
        return cls(np.asarray(n_grid), np.clip(acc.mean(), 0.0, 1.0), acc.stderr(),
                   acc.count, dict(meta or {}))
