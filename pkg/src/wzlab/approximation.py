"""Piecewise-linear interpolation of a driver and its forward-step splitting.

For a level ``n`` the interpolant ``U_n`` agrees with ``G`` at ``k/n`` and is
linear in between.  It is split as ``U_n = Y_n + Z_n`` with the step path
``Y_n(t) = G(([nt] + 1)/n)``, which jumps at every node ``k/n`` (including
``t = 0``), and ``Z_n = U_n - Y_n``, which is linear on each cell and vanishes
just before each node.

On ``[0, T)`` these are the textbook definitions.  At the terminal node the
paths hold their left limits (``Y_n(T) = U_n(T) = G(T)``, ``Z_n(T) = 0``), so
no value beyond the horizon is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import tensor_product
from .paths import GridError, SamplePath


def _nodes(g: SamplePath, n: int) -> tuple[np.ndarray, int]:
    if g.rank != 1:
        raise GridError("drivers must be vector-valued paths")
    stride = g.grid.stride(n)
    # time axis to position -2: (*batch, steps+1, d)
    return g.values[..., ::stride, :], stride


def _spread(nodes: np.ndarray, stride: int):
    """Left node value, forward increment and cell fraction for every fine node."""
    steps = (nodes.shape[-2] - 1) * stride
    idx = np.arange(steps + 1)
    k = np.minimum(idx // stride, nodes.shape[-2] - 2)
    frac = (idx - k * stride) / stride
    delta = np.diff(nodes, axis=-2)
    return nodes[..., k, :], delta[..., k, :], frac


def _interpolate(nodes: np.ndarray, stride: int) -> np.ndarray:
    base, delta, frac = _spread(nodes, stride)
    u = base + frac[:, None] * delta
    u[..., ::stride, :] = nodes          # exact at k/n, including t = T
    return u


def linear_interpolation(g: SamplePath, n: int) -> SamplePath:
    """Piecewise-linear interpolant of ``g`` through the nodes ``k/n``."""
    nodes, stride = _nodes(g, n)
    return SamplePath(g.grid, _interpolate(nodes, stride), rank=1, linear=True)


@dataclass(frozen=True)
class SplitPaths:
    """``U_n = Y_n + Z_n`` on a common fine grid at interpolation level ``n``."""

    U: SamplePath
    Y: SamplePath
    Z: SamplePath
    n: int
    node_values: np.ndarray      # G(k/n), shape (*batch, m + 1, d)

    @property
    def stride(self) -> int:
        return self.U.grid.stride(self.n)

    @property
    def delta(self) -> np.ndarray:
        """Interpolation increments ``G((k+1)/n) - G(k/n)``, shape ``(*batch, m, d)``."""
        return np.diff(self.node_values, axis=-2)

    def bracket_sum(self, m: int | None = None) -> np.ndarray:
        """``sum_{k<m} dG_k (x) dG_k``, which is ``[Y_n, Y_n]`` just before ``m/n``."""
        d = self.delta
        m = d.shape[-2] if m is None else m
        return tensor_product(d[..., :m, :], d[..., :m, :]).sum(axis=-3)


def forward_step_split(g: SamplePath, n: int) -> SplitPaths:
    """Linear interpolant of ``g`` and its forward-step splitting at level ``n``."""
    nodes, stride = _nodes(g, n)
    base, delta, _ = _spread(nodes, stride)
    u = _interpolate(nodes, stride)
    y = base + delta                         # G(k/n + 1/n) on [k/n, (k+1)/n)
    y[..., -1, :] = nodes[..., -1, :]
    y_pre = y.copy()
    y_pre[..., stride::stride, :] = nodes[..., 1:, :]
    y_pre[..., 0, :] = nodes[..., 0, :]
    z = u - y
    z_pre = u - y_pre
    U = SamplePath(g.grid, u, rank=1, linear=True)
    Y = SamplePath(g.grid, y, rank=1, pre=y_pre, linear=True)
    Z = SamplePath(g.grid, z, rank=1, pre=z_pre, linear=True)
    return SplitPaths(U, Y, Z, n, nodes)
