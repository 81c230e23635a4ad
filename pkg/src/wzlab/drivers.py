"""Sample paths of the driving noise for each scenario.

* Q-Wiener processes in a truncated basis (Karhunen-Loeve form).
* Martingale / telescoping split of a normalised Markov-chain additive
  functional.
* Space-time white noise on a finite box, mollified in space and time, split
  into a Gaussian martingale part and a small remainder.

Random input is either a ``numpy.random.Generator`` or pre-drawn standard
normals / uniforms, which is how scenarios couple several levels ``n`` to a
single noise realisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from .paths import GridError, SamplePath, TimeGrid


# ---------------------------------------------------------------------------
# Q-Wiener process

@dataclass(frozen=True)
class QWienerSpec:
    """Diagonal covariance ``Q = diag(eigenvalues)`` in the truncation basis."""

    eigenvalues: tuple[float, ...]

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a non-empty 1-D sequence")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError(f"eigenvalues must be finite and nonnegative, got {lam}")
        object.__setattr__(self, "eigenvalues", tuple(float(v) for v in lam))

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.eigenvalues)

    def trace(self) -> float:
        return float(sum(self.eigenvalues))


def simulate_qwiener(spec: QWienerSpec, grid: TimeGrid, rng=None, *,
                     normals: np.ndarray | None = None, batch: tuple[int, ...] = ()) -> SamplePath:
    """``W(t) = sum_j sqrt(lambda_j) beta_j(t) e_j`` sampled on ``grid``.

    ``normals`` (shape ``(*batch, steps, d)``) overrides ``rng``.
    """
    d = spec.dim
    if normals is None:
        if rng is None:
            raise ValueError("need rng or normals")
        normals = rng.standard_normal(tuple(batch) + (grid.steps, d))
    normals = np.asarray(normals, dtype=float)
    if normals.shape[-2:] != (grid.steps, d):
        raise GridError(f"normals shape {normals.shape} does not match ({grid.steps}, {d})")
    incr = normals * np.sqrt(np.asarray(spec.eigenvalues) * grid.dt)
    values = np.zeros(normals.shape[:-2] + (grid.steps + 1, d))
    np.cumsum(incr, axis=-2, out=values[..., 1:, :])
    return SamplePath(grid, values, rank=1)


# ---------------------------------------------------------------------------
# Markov-chain driver

def stationary_distribution(p: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eig(p.T)
    k = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, k])
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class MarkovDriverSpec:
    """Finite-state chain with basis embedding and Hilbert-Schmidt operator.

    ``embed[x, k]`` is the value of basis function ``e_k`` at state ``x`` (so
    the basis of L2(pi) is orthonormal when ``embed.T @ diag(pi) @ embed = I``).
    ``S[i, j] = <S e_j, e_i>``.
    """

    transition: np.ndarray
    pi: np.ndarray | None = None
    embed: np.ndarray | None = None
    S: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"transition matrix must be square, got {p.shape}")
        if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-10:
            raise ValueError("transition matrix is not row-stochastic")
        pi = stationary_distribution(p) if self.pi is None else np.asarray(self.pi, dtype=float)
        if np.max(np.abs(pi @ p - pi)) > 1e-10 or np.any(pi < 0):
            raise ValueError("pi is not a stationary distribution of the transition matrix")
        embed = np.diag(1.0 / np.sqrt(pi)) if self.embed is None else np.asarray(self.embed, float)
        if embed.shape[0] != p.shape[0]:
            raise ValueError("embed must have one row per state")
        d = embed.shape[1]
        s = np.eye(d) if self.S is None else np.asarray(self.S, dtype=float)
        if s.shape != (d, d) or not np.all(np.isfinite(s)):
            raise ValueError(f"S must be a finite {d}x{d} array")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "embed", embed)
        object.__setattr__(self, "S", s)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def dim(self) -> int:
        return self.embed.shape[1]

    @cached_property
    def s_table(self) -> np.ndarray:
        """``(S e_k)(x)`` indexed ``[x, k]``."""
        return self.embed @ self.S

    @cached_property
    def ps_table(self) -> np.ndarray:
        """``(P S e_k)(x)`` indexed ``[x, k]``."""
        return self.transition @ self.s_table

    def function_of(self, h) -> np.ndarray:
        """State values of ``S h`` for a coefficient vector ``h``."""
        return self.s_table @ np.asarray(h, dtype=float)


def simulate_chain(spec: MarkovDriverSpec, steps: int, uniforms: np.ndarray) -> np.ndarray:
    """States ``xi_0..xi_steps`` from uniforms of shape ``(*batch, steps + 1)``; ``xi_0 ~ pi``."""
    cum_pi = np.cumsum(spec.pi)
    cum_p = np.cumsum(spec.transition, axis=1)
    last = spec.n_states - 1
    xi = np.empty(uniforms.shape, dtype=np.intp)
    xi[..., 0] = np.minimum(np.searchsorted(cum_pi, uniforms[..., 0], side="right"), last)
    for k in range(1, steps + 1):
        rows = cum_p[xi[..., k - 1]]
        xi[..., k] = np.minimum((uniforms[..., k, None] >= rows).sum(axis=-1), last)
    return xi


def simulate_markov_driver(spec: MarkovDriverSpec, n: int, T: float, rng=None, *,
                           grid: TimeGrid | None = None, uniforms: np.ndarray | None = None,
                           batch: tuple[int, ...] = ()) -> tuple[SamplePath, SamplePath]:
    """Martingale part ``Y_n`` and telescoping remainder ``Z_n`` as step paths.

    ``Y_n`` jumps at ``k/n`` by ``(PSe(xi_{k-1}) - Se(xi_k)) / sqrt(n)`` and
    ``Z_n(t) = (PSe(xi_[nt]) - PSe(xi_0)) / sqrt(n)``, coordinatewise over the
    basis.  ``grid`` may refine the ``1/n`` lattice by an integer factor.
    """
    grid = TimeGrid(T, int(round(n * T))) if grid is None else grid
    if abs(grid.horizon - T) > 1e-12:
        raise GridError("grid horizon differs from T")
    stride = grid.stride(n)
    m = grid.steps // stride
    if uniforms is None:
        if rng is None:
            raise ValueError("need rng or uniforms")
        uniforms = rng.random(tuple(batch) + (m + 1,))
    xi = simulate_chain(spec, m, np.asarray(uniforms))
    a, b = spec.s_table, spec.ps_table
    scale = 1.0 / np.sqrt(n)
    y_jumps = (b[xi[..., :-1]] - a[xi[..., 1:]]) * scale       # k = 1..m
    z_level = (b[xi] - b[xi[..., :1]]) * scale                  # at k = 0..m
    y_level = np.zeros(z_level.shape)
    np.cumsum(y_jumps, axis=-2, out=y_level[..., 1:, :])
    return _step_path(grid, y_level, stride), _step_path(grid, z_level, stride)


def _step_path(grid: TimeGrid, levels: np.ndarray, stride: int) -> SamplePath:
    # levels[..., k, :] is the value on [k/n, (k+1)/n); jumps happen at k/n
    values = np.repeat(levels, stride, axis=-2)[..., :grid.steps + 1, :]
    pre = values.copy()
    pre[..., stride::stride, :] = levels[..., :-1, :]
    pre[..., 0, :] = levels[..., 0, :]
    values[..., -1, :] = levels[..., -1, :]
    return SamplePath(grid, values, rank=1, pre=pre, linear=True)


def markov_limit_covariance(spec: MarkovDriverSpec, h_i, h_j) -> float:
    """Exact ``sum_x pi(x) sum_y P(x,y) (PSh_i(x) - Sh_i(y)) (PSh_j(x) - Sh_j(y))``."""
    a_i, a_j = spec.function_of(h_i), spec.function_of(h_j)
    b_i, b_j = spec.transition @ a_i, spec.transition @ a_j
    di = b_i[:, None] - a_i[None, :]
    dj = b_j[:, None] - a_j[None, :]
    return float(np.einsum("x,xy,xy,xy->", spec.pi, spec.transition, di, dj))


@dataclass(frozen=True)
class MarkovLimit:
    """Per-unit-time limits of the brackets and integrals of the split."""

    covariance: np.ndarray   # [Y, Y] rate, also the Gaussian limit covariance
    h_rate: np.ndarray       # int Z- (x) dZ
    k_rate: np.ndarray       # [Y, Z]
    zz_rate: np.ndarray      # [Z, Z]

    @property
    def theta_rate(self) -> np.ndarray:
        # pairs with T[i, j] = d_b f_i f_j: H^* minus the bracket [Z, Y]
        return (self.h_rate - self.k_rate).T


def markov_limit(spec: MarkovDriverSpec) -> MarkovLimit:
    a, b = spec.s_table, spec.ps_table
    w = spec.pi[:, None] * spec.transition                      # w[x, y]
    dy = b[:, None, :] - a[None, :, :]                          # PSe(x) - Se(y)
    dz = b[None, :, :] - b[:, None, :]                          # PSe(y) - PSe(x)
    cov = np.einsum("xy,xyi,xyj->ij", w, dy, dy)
    k = np.einsum("xy,xyi,xyj->ij", w, dy, dz)
    zz = np.einsum("xy,xyi,xyj->ij", w, dz, dz)
    h = np.einsum("xy,xi,xyj->ij", w, b, dz)
    return MarkovLimit(cov, h, k, zz)


# ---------------------------------------------------------------------------
# Mollified space-time white noise

def _bump() -> Polynomial:
    # (1 - x^2)^3 on [-1, 1], C^2 at the edges of its support
    return Polynomial([1.0, 0.0, -1.0]) ** 3


_BUMP = _bump()
_BUMP_MASS = float(_BUMP.integ()(1.0) - _BUMP.integ()(-1.0))
# time profile supported on (-1, 0): bump((2 s + 1))
_ETA = _BUMP(Polynomial([1.0, 2.0])) / _BUMP_MASS * 2.0
_ETA_INT = _ETA.integ()


def eta(s) -> np.ndarray:
    """Unit-mass time mollifier supported on ``(-1, 0)``."""
    s = np.asarray(s, dtype=float)
    return np.where((s > -1) & (s < 0), _ETA(s), 0.0)


def eta_mass_before(a) -> np.ndarray:
    """``int_{-min(a,1)}^0 eta``: weight of noise at lag ``a`` (in units of ``1/n``)."""
    a = np.clip(np.asarray(a, dtype=float), 0.0, 1.0)
    return _ETA_INT(0.0) - _ETA_INT(-a)


def rho(x) -> np.ndarray:
    """Radial spatial bump ``(1 - |x|^2)^3`` on the open unit ball (unnormalised)."""
    r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
    return np.where(r2 < 1.0, (1.0 - r2) ** 3, 0.0)


@dataclass(frozen=True, eq=False)
class MollifiedNoiseSpec:
    """White noise on a box, kernel operator ``S`` and mollifier settings.

    ``kernel[i, j] = gamma(x_i, x_j)`` on the cell centres of a uniform grid
    with ``points_per_axis`` points along every axis of ``box``.
    """

    kernel: np.ndarray
    box: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    points_per_axis: int = 16
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        m = self.points_per_axis ** len(self.box)
        if k.shape != (m, m) or not np.all(np.isfinite(k)):
            raise ValueError(f"kernel must be a finite {m}x{m} array, got {k.shape}")
        object.__setattr__(self, "kernel", k)

    @classmethod
    def gaussian(cls, points_per_axis: int = 16, width: float = 0.2,
                 box=((0.0, 1.0),)) -> "MollifiedNoiseSpec":
        x = _cell_centres(box, points_per_axis)
        d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
        return cls(np.exp(-d2 / (2 * width ** 2)), tuple(map(tuple, box)), points_per_axis)

    @classmethod
    def from_function(cls, gamma, points_per_axis: int = 16,
                      box=((0.0, 1.0),)) -> "MollifiedNoiseSpec":
        x = _cell_centres(box, points_per_axis)
        kern = gamma(x[:, None, :], x[None, :, :])
        return cls(np.asarray(kern, float), tuple(map(tuple, box)), points_per_axis)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / self.points_per_axis for lo, hi in self.box])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def points(self) -> np.ndarray:
        return _cell_centres(self.box, self.points_per_axis)

    @property
    def dim(self) -> int:
        return self.kernel.shape[0]

    @property
    def S(self) -> np.ndarray:
        """Kernel operator in the orthonormal cell basis ``1_cell / sqrt(vol)``."""
        return self.kernel * self.cell_volume

    def spatial_mollifier(self, n: int) -> np.ndarray:
        """Matrix of ``h -> int h(y) rho_n(x - y) dy`` with unit lattice mass."""
        if np.any(self.spacing > 1.0 / n + 1e-12):
            raise GridError(f"space grid spacing {self.spacing} does not resolve width 1/{n}")
        key = ("Sn", n)
        if key not in self._cache:
            x = self.points
            w = rho(n * (x[:, None, :] - x[None, :, :]))
            # mass of the kernel on the full (unbounded) lattice
            reach = np.ceil(1.0 / (n * self.spacing)).astype(int)
            offs = np.stack(np.meshgrid(*[np.arange(-r, r + 1) for r in reach],
                                        indexing="ij"), axis=-1).reshape(-1, len(reach))
            mass = rho(n * offs * self.spacing).sum()
            self._cache[key] = w / mass
        return self._cache[key]

    def time_weights(self, n: int, dt: float) -> np.ndarray:
        """Cell-averaged weights ``omega[j-1]`` of noise ``j`` steps in the past."""
        if dt > 1.0 / (4 * n) + 1e-15:
            raise GridError(f"time step {dt} does not resolve mollifier width 1/{n} (need <= 1/(4n))")
        jmax = int(np.ceil(1.0 / (n * dt))) + 1
        gx, gw = np.polynomial.legendre.leggauss(8)
        j = np.arange(1, jmax + 1)[:, None]
        u = (j - 1 + (gx + 1) / 2) * dt
        return (eta_mass_before(n * u) * gw / 2).sum(axis=1)


def _cell_centres(box, points_per_axis: int) -> np.ndarray:
    axes = [lo + (np.arange(points_per_axis) + 0.5) * (hi - lo) / points_per_axis
            for lo, hi in box]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))


def white_noise(spec: MollifiedNoiseSpec, grid: TimeGrid, rng, batch=()) -> np.ndarray:
    """Cell increments of the white noise in the orthonormal cell basis, ``N(0, dt)`` each."""
    return rng.standard_normal(tuple(batch) + (grid.steps, spec.dim)) * np.sqrt(grid.dt)


def _cumulative(grid: TimeGrid, incr: np.ndarray) -> np.ndarray:
    out = np.zeros(incr.shape[:-2] + (grid.steps + 1, incr.shape[-1]))
    np.cumsum(incr, axis=-2, out=out[..., 1:, :])
    return out


def simulate_mollified_noise(spec: MollifiedNoiseSpec, n: int, grid: TimeGrid, rng=None, *,
                             noise: np.ndarray | None = None, batch=()
                             ) -> tuple[SamplePath, SamplePath, np.ndarray]:
    """Split of the mollified noise ``W_n = Y_n + Z_n`` with ``Y_n(h, t) = W(S_n S h, t)``.

    Returns coefficient paths of ``Y_n`` and ``Z_n`` and the matrix of ``S``.
    """
    if noise is None:
        if rng is None:
            raise ValueError("need rng or noise")
        noise = white_noise(spec, grid, rng, batch)
    noise = np.asarray(noise, dtype=float)
    if noise.shape[-2:] != (grid.steps, spec.dim):
        raise GridError(f"noise shape {noise.shape} does not match ({grid.steps}, {spec.dim})")
    s = spec.S
    sns = spec.spatial_mollifier(n) @ s
    omega = spec.time_weights(n, grid.dt)
    v = noise @ sns                                # rows: (S_n S)^T beta_k
    y = _cumulative(grid, v)
    z = np.zeros_like(y)
    for j, w in enumerate(omega, start=1):
        if j > grid.steps:
            break
        z[..., j:, :] += (w - 1.0) * v[..., :grid.steps + 1 - j, :]
    return SamplePath(grid, y, rank=1), SamplePath(grid, z, rank=1), s


def mollified_limit_driver(spec: MollifiedNoiseSpec, grid: TimeGrid,
                           noise: np.ndarray) -> SamplePath:
    """Limit driver ``W(S h, t)`` as a coefficient path, ``S^T W(t)``."""
    return SamplePath(grid, _cumulative(grid, np.asarray(noise) @ spec.S), rank=1)
