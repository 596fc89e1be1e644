"""Uniform binning of the scalar output range and histogram tallying."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Binning", "Histogram", "tally"]


@dataclass(frozen=True)
class Binning:
    """M equal-width, half-open bins [lo + i*delta, lo + (i+1)*delta).

    The single closure point y == hi belongs to the last bin, so the closed
    interval [lo, hi] is covered exactly once.
    """

    lo: float
    hi: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("bin range must be finite")
        if not self.hi > self.lo:
            raise ValueError(f"need hi > lo, got [{self.lo}, {self.hi}]")
        if self.m < 1:
            raise ValueError(f"need at least one bin, got m={self.m}")

    @property
    def delta(self) -> float:
        return (self.hi - self.lo) / self.m

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.m) + 0.5) * self.delta

    @property
    def edges(self) -> np.ndarray:
        """m + 1 edges; edges[i], edges[i+1] bound bin i."""
        return self.lo + np.arange(self.m + 1) * self.delta

    def index(self, y: float) -> int | None:
        """Bin index of y, or None if y lies outside [lo, hi].

        Raises ValueError on non-finite y: NaN has no meaningful bin and
        silently dropping it would corrupt tallies downstream.
        """
        if not math.isfinite(y):
            raise ValueError(f"cannot bin non-finite value {y!r}")
        if y < self.lo or y > self.hi:
            return None
        if y == self.hi:
            return self.m - 1
        # floor can land on m for y just below hi after rounding; clamp.
        return min(int((y - self.lo) / self.delta), self.m - 1)

    def indices(self, ys: np.ndarray) -> np.ndarray:
        """Vectorized index; out-of-range entries map to -1."""
        ys = np.asarray(ys, dtype=float)
        if not np.all(np.isfinite(ys)):
            raise ValueError("cannot bin non-finite values")
        idx = np.floor((ys - self.lo) / self.delta).astype(np.int64)
        np.clip(idx, 0, self.m - 1, out=idx)
        idx[(ys < self.lo) | (ys > self.hi)] = -1
        return idx


@dataclass
class Histogram:
    """Per-bin counts plus the out-of-range remainder.

    Invariant: counts.sum() + overflow_low + overflow_high == total.
    """

    counts: np.ndarray
    total: int
    overflow_low: int = 0
    overflow_high: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.sum() + self.overflow_low + self.overflow_high != self.total:
            raise ValueError("histogram counts do not add up to total")

    @property
    def in_range(self) -> int:
        return self.total - self.overflow_low - self.overflow_high


def tally(binning: Binning, ys: np.ndarray) -> Histogram:
    """Count samples per bin; out-of-range samples land in the overflows."""
    ys = np.asarray(ys, dtype=float)
    idx = binning.indices(ys)
    inside = idx >= 0
    counts = np.bincount(idx[inside], minlength=binning.m)
    low = int(np.count_nonzero(ys < binning.lo))
    high = int(np.count_nonzero(ys > binning.hi))
    return Histogram(counts=counts, total=int(ys.size),
                     overflow_low=low, overflow_high=high)
