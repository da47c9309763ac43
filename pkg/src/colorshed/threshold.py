"""Utility history, its empirical CDF, and drop-rate to threshold inversion.

A frame is shed when ``utility <= threshold``. ``SHED_NONE`` (``None``) means
no threshold is active; it orders below every real threshold.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import InputError

SHED_NONE = None
DEFAULT_WINDOW = 2000

Threshold = Optional[float]


def threshold_key(t: Threshold) -> float:
    """Sort key placing SHED_NONE below all real thresholds."""
    return float("-inf") if t is None else t


class UtilityHistory:
    """Bounded FIFO of recent frame utilities."""

    def __init__(self, capacity: int = DEFAULT_WINDOW, values: Iterable[float] = (),
                 seeded_from: str = "runtime"):
        if capacity < 1:
            raise InputError("history capacity must be >= 1")
        self.capacity = capacity
        self.seeded_from = seeded_from
        self._buf: deque[float] = deque(maxlen=capacity)
        for u in values:
            self.push(u)

    @classmethod
    def from_training(cls, utilities: Iterable[float], capacity: int = DEFAULT_WINDOW):
        return cls(capacity, utilities, seeded_from="training_set")

    def push(self, u: float) -> None:
        if not 0.0 <= u <= 1.0:
            raise InputError(f"utility {u} outside [0, 1]")
        self._buf.append(float(u))

    def __len__(self):
        return len(self._buf)

    def __iter__(self):
        return iter(self._buf)

    def values(self) -> np.ndarray:
        return np.fromiter(self._buf, dtype=np.float64, count=len(self._buf))


def push_utility(history: UtilityHistory, u: float) -> UtilityHistory:
    history.push(u)
    return history


@dataclass(frozen=True)
class UtilityCdf:
    """Step CDF: ``CDF(values[k]) = cum_counts[k] / n``."""

    values: np.ndarray
    cum_counts: np.ndarray
    n: int

    @property
    def fractions(self) -> np.ndarray:
        return self.cum_counts / self.n

    def __call__(self, u: float) -> float:
        k = int(np.searchsorted(self.values, u, side="right"))
        return 0.0 if k == 0 else int(self.cum_counts[k - 1]) / self.n

    def steps(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.fractions.tolist()))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["utility", "cdf"])
            for u, c in self.steps():
                w.writerow([repr(u), repr(c)])


def build_cdf(history: UtilityHistory | Iterable[float]) -> UtilityCdf:
    vals = history.values() if isinstance(history, UtilityHistory) else np.asarray(
        list(history), dtype=np.float64
    )
    if len(vals) == 0:
        raise InputError("cannot build a CDF from an empty history")
    uniq, counts = np.unique(vals, return_counts=True)
    return UtilityCdf(uniq, np.cumsum(counts), len(vals))


def threshold_for_drop_rate(cdf: UtilityCdf, r: float) -> Threshold:
    """Smallest step value ``u`` with ``CDF(u) >= r``; SHED_NONE for ``r == 0``."""
    if not 0.0 <= r <= 1.0:
        raise InputError(f"drop rate {r} outside [0, 1]")
    if r == 0.0:
        return SHED_NONE
    k = int(np.searchsorted(cdf.fractions, r, side="left"))
    return float(cdf.values[min(k, len(cdf.values) - 1)])
