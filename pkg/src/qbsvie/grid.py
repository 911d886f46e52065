"""Uniform time partitions of [0, T] and the index sets built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

MAX_STEPS = 1 << 20


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition 0 = t_0 < ... < t_N = T.

    Points are computed as ``k * T / N`` and never accumulated, so a refined
    grid contains every point of its parent bit-for-bit.
    """

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise GridError(f"horizon must be positive and finite, got {self.horizon!r}")
        if isinstance(self.steps, bool) or int(self.steps) != self.steps or self.steps < 1:
            raise GridError(f"steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))
        if self.steps > MAX_STEPS:
            raise GridError(f"steps={self.steps} exceeds maximum {MAX_STEPS}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def points(self) -> np.ndarray:
        return np.array([self.time(k) for k in range(self.steps + 1)])

    def time(self, k: int) -> float:
        if k == self.steps:
            return float(self.horizon)
        return k * self.horizon / self.steps

    def index_of(self, t: float) -> int:
        """Index of grid time ``t``; raises if ``t`` is not a grid point."""
        k = int(round(t / self.horizon * self.steps))
        if not 0 <= k <= self.steps or self.time(k) != t:
            raise GridError(f"{t!r} is not a point of {self}")
        return k

    def __len__(self) -> int:
        return self.steps + 1


class TrianglePoint(NamedTuple):
    i: int
    j: int


def make_uniform_grid(horizon: float, steps: int) -> TimeGrid:
    return TimeGrid(horizon, steps)


def triangle_points(grid: TimeGrid) -> list[TrianglePoint]:
    """All (i, j) with 0 <= i <= j <= N in lexicographic order."""
    return list(_iter_triangle(grid.steps))


def _iter_triangle(n: int) -> Iterator[TrianglePoint]:
    for i in range(n + 1):
        for j in range(i, n + 1):
            yield TrianglePoint(i, j)


def square_points(grid: TimeGrid) -> list[TrianglePoint]:
    n = grid.steps
    return [TrianglePoint(i, j) for i in range(n + 1) for j in range(n + 1)]


def refine(grid: TimeGrid, max_steps: int = MAX_STEPS) -> TimeGrid:
    """Halve every step; the new grid contains every old point."""
    if 2 * grid.steps > max_steps:
        raise GridError(f"refining N={grid.steps} would exceed maximum {max_steps}")
    return TimeGrid(grid.horizon, 2 * grid.steps)


def is_nested(coarse: TimeGrid, fine: TimeGrid) -> bool:
    return coarse.horizon == fine.horizon and fine.steps % coarse.steps == 0
