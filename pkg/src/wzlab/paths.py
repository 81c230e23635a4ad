"""Time grids and cadlag sample paths with explicit jump bookkeeping.

A :class:`SamplePath` stores, for every grid node ``t_k``, the right-continuous
value ``values[k]`` (the value at ``t_k+``) and the left limit ``pre[k]``.
Where ``pre[k] != values[k]`` the path jumps at ``t_k``; a jump at ``t_0``
is allowed and means the path starts from ``pre[0]`` at ``0-``.

Partition sums walk the *augmented* sequence

    pre[0], values[0], pre[1], values[1], ..., pre[N], values[N]

so each node contributes a jump increment ``values[k] - pre[k]`` and each
grid cell a continuous increment ``pre[k+1] - values[k]``.  Left endpoints of
jump increments are the pre-jump values, which is the ``X(s-)`` convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Raised for incompatible or misaligned time grids."""


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise GridError(f"horizon must be positive, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise GridError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def stride(self, n: int) -> int:
        """Fine steps per interpolation cell of width ``1/n``."""
        cells = n * self.horizon
        if abs(cells - round(cells)) > 1e-9 or round(cells) < 1:
            raise GridError(f"horizon {self.horizon} is not a multiple of 1/{n}")
        cells = int(round(cells))
        if self.steps % cells:
            raise GridError(
                f"grid of {self.steps} steps does not refine 1/{n} cells on "
                f"[0, {self.horizon}] by an integer factor")
        return self.steps // cells


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Cadlag path on a uniform grid.

    ``values`` has shape ``(*batch, steps + 1, *payload)`` where the payload
    rank is ``rank`` (0 real, 1 HVector, 2 HSTensor).  ``pre`` holds left
    limits with the same shape, or ``None`` for a path without jumps.
    ``linear`` declares that between consecutive nodes the continuous part of
    the path is the straight segment joining them (true for interpolants and
    step paths); integrals of one linear path against another are then
    evaluated exactly on each cell.
    """

    grid: TimeGrid
    values: np.ndarray
    rank: int = 0
    pre: np.ndarray | None = None
    linear: bool = False
    _aug: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim < self.rank + 1:
            raise GridError(f"values of shape {values.shape} cannot hold rank-{self.rank} payload")
        if values.shape[self.time_axis] != self.grid.steps + 1:
            raise GridError(
                f"time axis has {values.shape[self.time_axis]} nodes, grid has "
                f"{self.grid.steps + 1}")
        if self.pre is not None:
            pre = np.asarray(self.pre, dtype=float)
            if pre.shape != values.shape:
                raise GridError(f"pre shape {pre.shape} != values shape {values.shape}")
            object.__setattr__(self, "pre", pre)

    @property
    def time_axis(self) -> int:
        return -(self.rank + 1)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.values.shape[:self.time_axis]

    @property
    def payload_shape(self) -> tuple[int, ...]:
        return self.values.shape[self.values.ndim - self.rank:]

    @property
    def left(self) -> np.ndarray:
        """Left limits at every node (equal to ``values`` away from jumps)."""
        return self.values if self.pre is None else self.pre

    @property
    def jumps(self) -> np.ndarray:
        """Boolean flag per node: does any batch member jump there."""
        if self.pre is None:
            return np.zeros(self.grid.steps + 1, dtype=bool)
        diff = np.moveaxis(self.values != self.pre, self.time_axis, 0)
        return diff.reshape(diff.shape[0], -1).any(axis=1)

    def at(self, k: int, side: str = "right") -> np.ndarray:
        """Value at node ``k``; ``side='left'`` returns the left limit."""
        src = self.values if side == "right" else self.left
        return np.take(src, k, axis=self.time_axis)

    def augmented(self) -> np.ndarray:
        """Interleaved ``(pre, value)`` sequence with time moved to axis 0."""
        if self._aug is None:
            v = np.moveaxis(self.values, self.time_axis, 0)
            p = np.moveaxis(self.left, self.time_axis, 0)
            aug = np.empty((2 * v.shape[0],) + v.shape[1:])
            aug[0::2] = p
            aug[1::2] = v
            object.__setattr__(self, "_aug", aug)
        return self._aug

    def increments(self) -> np.ndarray:
        """Augmented increments (time axis 0, length ``2 N + 1``).

        Even entries are jumps at nodes, odd entries are cell increments.
        """
        return np.diff(self.augmented(), axis=0)

    def __add__(self, other: "SamplePath") -> "SamplePath":
        return combine(self, other, 1.0, 1.0)

    def __sub__(self, other: "SamplePath") -> "SamplePath":
        return combine(self, other, 1.0, -1.0)

    def scaled(self, c: float) -> "SamplePath":
        pre = None if self.pre is None else c * self.pre
        return SamplePath(self.grid, c * self.values, self.rank, pre, self.linear)


def combine(x: SamplePath, y: SamplePath, a: float, b: float) -> SamplePath:
    """Linear combination ``a x + b y`` of two paths on the same grid."""
    check_common(x, y)
    if x.rank != y.rank:
        raise GridError(f"rank mismatch {x.rank} vs {y.rank}")
    pre = None
    if x.pre is not None or y.pre is not None:
        pre = a * x.left + b * y.left
    return SamplePath(x.grid, a * x.values + b * y.values, x.rank, pre,
                      x.linear and y.linear)


def check_common(*paths: SamplePath) -> TimeGrid:
    grid = paths[0].grid
    for p in paths[1:]:
        if p.grid != grid:
            raise GridError(f"grid mismatch: {p.grid} vs {grid}")
    return grid


def from_augmented(grid: TimeGrid, aug: np.ndarray, rank: int,
                   linear: bool = False) -> SamplePath:
    """Inverse of :meth:`SamplePath.augmented`."""
    pre = np.moveaxis(aug[0::2], 0, -(rank + 1))
    values = np.moveaxis(aug[1::2], 0, -(rank + 1))
    if np.array_equal(pre, values):
        pre = None
    return SamplePath(grid, values, rank, pre, linear)


def deterministic(grid: TimeGrid, fn, rank: int = 1, linear: bool = False) -> SamplePath:
    """Sample ``fn(t)`` at every node; ``fn`` must broadcast over a 1-D time array."""
    values = np.asarray(fn(grid.nodes), dtype=float)
    return SamplePath(grid, values, rank, None, linear)
