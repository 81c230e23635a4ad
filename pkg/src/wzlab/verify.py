"""Exact partition identities checked on randomised inputs (no Monte Carlo).

Every identity is an algebraic fact about finite left-point sums on one
partition, so residuals are pure float rounding.  Each check draws fresh
random paths (with jumps at random nodes) for every seed and reports the
largest relative residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calculus as calc
from .approximation import forward_step_split
from .paths import SamplePath, TimeGrid, from_augmented

TOL = 1e-10


@dataclass(frozen=True)
class IdentityResult:
    name: str
    worst: float
    seeds: int

    @property
    def passed(self) -> bool:
        return self.worst <= TOL


def _rel(lhs: np.ndarray, rhs: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs))) / scale


def rough_path(rng: np.random.Generator, grid: TimeGrid, shape=(), jump_rate=0.3) -> SamplePath:
    """Random walk path with jumps at a random subset of nodes (including ``t = 0``)."""
    cells = rng.standard_normal((grid.steps,) + shape)
    jumps = rng.standard_normal((grid.steps + 1,) + shape)
    jumps *= (rng.random(grid.steps + 1) < jump_rate).reshape((-1,) + (1,) * len(shape))
    aug = np.empty((2 * grid.steps + 2,) + shape)
    aug[0] = rng.standard_normal(shape)
    inc = np.empty((2 * grid.steps + 1,) + shape)
    inc[0::2] = jumps
    inc[1::2] = cells
    aug[1:] = aug[0] + np.cumsum(inc, axis=0)
    return from_augmented(grid, aug, len(shape))


def _setup(seed: int):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    grid = TimeGrid(float(rng.uniform(0.5, 2.0)), int(rng.integers(4, 40)))
    return rng, d, grid


def integration_by_parts(seed: int) -> float:
    rng, d, grid = _setup(seed)
    x, y = rough_path(rng, grid, (d,)), rough_path(rng, grid, (d,))
    lhs = (np.einsum("...i,...j->...ij", x.values, y.values)
           - np.einsum("i,j->ij", x.left[0], y.left[0])[None]
           - calc.tensor_integral_left(x, y).values
           - calc.tensor_integral_right(x, y).values)
    return _rel(lhs, calc.tensor_covariation(x, y).values)


def chain_rule(seed: int) -> float:
    rng, d, grid = _setup(seed)
    x, y = rough_path(rng, grid, (d,)), rough_path(rng, grid, (d,))
    j = rough_path(rng, grid, (d, d))
    z = calc.tensor_integral_left(x, y)
    lhs = calc.contract_integral(j, z).values
    # J(X) contracts the first tensor slot: (phi (x) psi)(X) = <X, phi> psi
    jx = calc.pointwise(lambda a, b: np.einsum("...ij,...i->...j", a, b), j, x, rank=1)
    rhs = calc.integral_left(jx, y).values
    return _rel(lhs, rhs)


def covariation_lemma(seed: int) -> float:
    """``[U, Z] = int J (x) V d[Z, Y]`` for ``U = int J dX`` and ``X = int <V, dY>``."""
    rng, d, grid = _setup(seed)
    y, z = rough_path(rng, grid, (d,)), rough_path(rng, grid, (d,))
    j, v = rough_path(rng, grid, (d,)), rough_path(rng, grid, (d,))
    x = calc.integral_left(v, y)
    u = calc.integral_left(j, x)
    lhs = calc.scalar_covariation(u, z).values
    jv = calc.pointwise(lambda a, b: np.einsum("...i,...j->...ij", a, b), j, v, rank=2)
    rhs = calc.contract_integral(jv, calc.tensor_covariation(z, y)).values
    return _rel(lhs, rhs)


def adjoint_identity(seed: int) -> float:
    rng, d, grid = _setup(seed)
    x, y = rough_path(rng, grid, (d,)), rough_path(rng, grid, (d,))
    lhs = np.swapaxes(calc.tensor_integral_left(x, y).values, -1, -2)
    # right integral assembled independently from increments and left values
    dy = y.increments()
    xl = x.augmented()[:-1]
    terms = dy[:, :, None] * xl[:, None, :]
    aug = np.concatenate([np.zeros((1, d, d)), np.cumsum(terms, axis=0)])
    rhs = aug[1::2]
    return max(_rel(lhs, rhs), _rel(lhs, calc.tensor_integral_right(y, x).values))


def trace_identity(seed: int) -> float:
    rng, d, grid = _setup(seed)
    x, y = rough_path(rng, grid, (d,)), rough_path(rng, grid, (d,))
    tens = calc.tensor_covariation(x, y).values
    return _rel(np.trace(tens, axis1=-2, axis2=-1), calc.scalar_covariation(x, y).values)


def _split(seed: int):
    rng, d, _ = _setup(seed)
    n = int(rng.integers(1, 9))
    r = int(rng.integers(2, 9))
    cells = int(rng.integers(1, 5)) * n
    grid = TimeGrid(cells / n, cells * r)
    g = rough_path(rng, grid, (d,))
    return forward_step_split(g, n)


def split_sum(seed: int) -> float:
    sp = _split(seed)
    return max(_rel((sp.Y + sp.Z).values, sp.U.values), _rel((sp.Y + sp.Z).left, sp.U.left))


def split_left_limit(seed: int) -> float:
    sp = _split(seed)
    lim = sp.Z.left[..., ::sp.stride, :]
    scale = max(float(np.max(np.abs(sp.U.values))), 1e-300)
    return float(np.max(np.abs(lim))) / scale


def split_closed_form(seed: int) -> float:
    sp = _split(seed)
    h = calc.tensor_integral_left(sp.Z, sp.Z)
    nodes = h.left[::sp.stride]
    m = nodes.shape[0]
    rhs = np.stack([-0.5 * sp.bracket_sum(k) for k in range(m)])
    return _rel(nodes, rhs)


IDENTITIES = {
    "integration-by-parts": integration_by_parts,
    "chain-rule": chain_rule,
    "covariation-lemma": covariation_lemma,
    "adjoint": adjoint_identity,
    "trace": trace_identity,
    "split-sum": split_sum,
    "split-left-limit-zero": split_left_limit,
    "split-closed-form": split_closed_form,
}


def run_verify(seeds: int = 100) -> list[IdentityResult]:
    return [IdentityResult(name, max(fn(s) for s in range(seeds)), seeds)
            for name, fn in IDENTITIES.items()]
