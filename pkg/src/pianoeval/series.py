"""Time-stamped scalar feature series and their correlation.

A :class:`FeatureSeries` is the common currency of the musically informed
metrics: a strictly increasing sequence of (time, value) samples extracted
from one performance. Two series are compared by holding both onto a shared
time grid and correlating the points where both are defined.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "FeatureSeries",
    "GridConfig",
    "resample_to_grid",
    "pearson",
    "correlate_series",
]

_GRID_EPS = 1e-9  # guards float error when counting grid points


@dataclass(frozen=True)
class FeatureSeries:
    """Immutable (time, value) samples with strictly increasing times."""

    samples: tuple[tuple[float, float], ...]

    def __post_init__(self):
        previous = -math.inf
        for time, value in self.samples:
            if time <= previous:
                raise ValueError(f"sample times must be strictly increasing (at t={time})")
            if not math.isfinite(value):
                raise ValueError(f"non-finite sample value {value} at t={time}")
            previous = time

    @classmethod
    def build(cls, samples: Iterable[tuple[float, float]]) -> "FeatureSeries":
        return cls(tuple((float(t), float(v)) for t, v in samples))

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(t for t, _ in self.samples)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class GridConfig:
    """Common-grid alignment parameters for correlating two series."""

    step: float = 0.1
    min_samples: int = 8

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.min_samples < 2:
            raise ValueError("min_samples must be at least 2")


def grid_times(t0: float, t1: float, step: float) -> list[float]:
    """Grid points t0, t0+step, ... up to and including t1."""
    if step <= 0:
        raise ValueError("step must be positive")
    if t1 < t0:
        return []
    count = int(math.floor((t1 - t0) / step + _GRID_EPS)) + 1
    return [t0 + k * step for k in range(count)]


def resample_to_grid(
    series: FeatureSeries, t0: float, t1: float, step: float
) -> list[Optional[float]]:
    """Previous-value-hold resampling onto the grid t0, t0+step, ..., <= t1.

    Each grid point takes the value of the latest sample at or before it;
    grid points before the first sample are undefined (None). When two
    series are paired downstream, only grid points defined on both sides
    are used.
    """
    if t1 < t0:
        raise ValueError("t0 must not exceed t1")
    times = series.times
    values = series.values
    out: list[Optional[float]] = []
    for t in grid_times(t0, t1, step):
        i = bisect_right(times, t) - 1
        out.append(values[i] if i >= 0 else None)
    return out


def pearson(a: Sequence[float], b: Sequence[float]) -> Optional[float]:
    """Sample Pearson correlation; None when either side has zero variance."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValueError("need at least 2 samples")
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.dot(dx, dx))
    sy = float(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        return None
    r = float(np.dot(dx, dy)) / math.sqrt(sx * sy)
    return min(1.0, max(-1.0, r))


def correlate_series(
    ref: FeatureSeries, est: FeatureSeries, grid: GridConfig
) -> Optional[float]:
    """Correlate two series on the common grid over their shared extent.

    The grid spans the intersection of the two time extents; both series
    are previous-value-held onto it and only points defined on both sides
    are correlated. Returns None when fewer than ``grid.min_samples``
    shared points exist or either side is constant.
    """
    if len(ref) == 0 or len(est) == 0:
        return None
    t0 = max(ref.samples[0][0], est.samples[0][0])
    t1 = min(ref.samples[-1][0], est.samples[-1][0])
    if t1 < t0:
        return None
    a = resample_to_grid(ref, t0, t1, grid.step)
    b = resample_to_grid(est, t0, t1, grid.step)
    paired = [(x, y) for x, y in zip(a, b) if x is not None and y is not None]
    if len(paired) < grid.min_samples:
        return None
    return pearson([x for x, _ in paired], [y for _, y in paired])
