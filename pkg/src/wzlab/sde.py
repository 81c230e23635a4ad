"""Coefficient fields, pathwise and limit solvers, and the correction field.

States are either real (``scalar=True``: ``f(x)`` is a vector in H) or
vectors in ``K = R^p`` (``f(x)`` is a ``p x D`` matrix in ``HS(H, K)``).  All
callables take batched states, ``x`` of shape ``(*batch,)`` or
``(*batch, p)``.

Internally every field is handled in the vector form with derivative arrays

    F[..., a, i]          = f_{ai}(x)
    DF[..., a, i, b]      = d f_{ai} / d x_b
    D2F[..., a, i, b, c]  = d^2 f_{ai} / d x_b d x_c

and the correction field is ``T[..., a, i, j] = sum_b DF[a, i, b] F[b, j]``,
paired with the increment of the correction process ``dTheta[i, j]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .paths import SamplePath, check_common

BLOWUP = 1e8


class BlowUpWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CoefficientField:
    """Analytic coefficient ``f`` with first and (optional) second derivative.

    For ``scalar=True`` the callables map ``(*batch,)`` states to arrays of
    shape ``(*batch, D)``.  Otherwise they map ``(*batch, p)`` states to
    ``(*batch, p, D)``, ``(*batch, p, D, p)`` and ``(*batch, p, D, p, p)``.
    """

    f: Callable
    df: Callable
    d2f: Callable | None
    noise_dim: int
    state_dim: int = 1
    scalar: bool = True
    bound: float = np.inf
    name: str = "field"

    def __post_init__(self):
        if self.scalar and self.state_dim != 1:
            raise ValueError("scalar fields have state_dim 1")

    # vector-form views -----------------------------------------------------
    def F(self, x: np.ndarray) -> np.ndarray:
        if self.scalar:
            return np.asarray(self.f(x[..., 0]), float)[..., None, :]
        return np.asarray(self.f(x), float)

    def DF(self, x: np.ndarray) -> np.ndarray:
        if self.scalar:
            return np.asarray(self.df(x[..., 0]), float)[..., None, :, None]
        return np.asarray(self.df(x), float)

    def D2F(self, x: np.ndarray) -> np.ndarray:
        if self.d2f is None:
            raise ValueError(f"{self.name}: no second derivative supplied")
        if self.scalar:
            return np.asarray(self.d2f(x[..., 0]), float)[..., None, :, None, None]
        return np.asarray(self.d2f(x), float)

    def as_state(self, x0) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        return x0[..., None] if self.scalar else x0


def _tilde(field: CoefficientField, x: np.ndarray) -> np.ndarray:
    return np.einsum("...aib,...bj->...aij", field.DF(x), field.F(x))


def correction_field(field: CoefficientField, x) -> np.ndarray:
    """Integrand paired with ``dTheta`` in the limit equation.

    Scalar state: the tensor ``Df(x) (x) f(x)``, shape ``(*batch, D, D)``.
    Vector state: one tensor per output coordinate, shape ``(*batch, p, D, D)``,
    with ``T_a[i, j] = sum_b d_b f_{ai}(x) f_{bj}(x)``.
    """
    t = _tilde(field, field.as_state(x))
    return t[..., 0, :, :] if field.scalar else t


# ---------------------------------------------------------------------------
# field library

def constant_field(h) -> CoefficientField:
    h = np.asarray(h, dtype=float)
    zero = lambda x: np.zeros(np.shape(x) + h.shape)
    return CoefficientField(lambda x: np.broadcast_to(h, np.shape(x) + h.shape).copy(),
                            zero, zero, h.size, bound=float(np.linalg.norm(h)),
                            name="constant")


def linear_field(h) -> CoefficientField:
    """``f(x) = x h``: geometric noise, the classical Wong-Zakai example when ``d = 1``."""
    h = np.asarray(h, dtype=float)
    return CoefficientField(lambda x: np.asarray(x)[..., None] * h,
                            lambda x: np.broadcast_to(h, np.shape(x) + h.shape).copy(),
                            lambda x: np.zeros(np.shape(x) + h.shape),
                            h.size, name="linear")


def sine_field(h) -> CoefficientField:
    h = np.asarray(h, dtype=float)
    return CoefficientField(lambda x: np.sin(x)[..., None] * h,
                            lambda x: np.cos(x)[..., None] * h,
                            lambda x: -np.sin(x)[..., None] * h,
                            h.size, bound=float(np.linalg.norm(h)), name="sine")


def linear_vector_field(a) -> CoefficientField:
    """``f(x)_{ai} = sum_b A[a, i, b] x_b`` for a state in ``R^p``."""
    a = np.asarray(a, dtype=float)
    p, d, p2 = a.shape
    if p != p2:
        raise ValueError(f"coefficient array must have shape (p, D, p), got {a.shape}")
    return CoefficientField(lambda x: np.einsum("aib,...b->...ai", a, x),
                            lambda x: np.broadcast_to(a, np.shape(x)[:-1] + a.shape).copy(),
                            lambda x: np.zeros(np.shape(x)[:-1] + a.shape + (p,)),
                            d, state_dim=p, scalar=False, name="linear-vector")


def augmented_field(sigma, d_t, d_x, d_u, dim: int, second=None) -> CoefficientField:
    """Field for a real equation ``dX = <sigma(t, X, U), dU>`` lifted to the
    state ``(t, X, U)`` and the driver ``(t, U, U)``.

    ``sigma``, ``d_t`` and ``d_x`` map ``(t, x, u)`` to ``(*batch, d)``;
    ``d_u`` returns ``(*batch, d, d)`` with entry ``[i, k] = d sigma_i / d u_k``.
    ``second`` optionally returns the full Hessian ``(*batch, d, p, p)`` in the
    state ordering ``(t, x, u_1..u_d)``.

    The lifted coefficient is the block matrix ``diag(1, sigma^T, I_d)`` acting
    on ``(dt, dU, dU)``.
    """
    d = dim
    p, big = 2 + d, 1 + 2 * d

    def split(s):
        return s[..., 0], s[..., 1], s[..., 2:]

    def f(s):
        t, x, u = split(s)
        out = np.zeros(s.shape[:-1] + (p, big))
        out[..., 0, 0] = 1.0
        out[..., 1, 1:1 + d] = sigma(t, x, u)
        out[..., 2:, 1 + d:] = np.eye(d)
        return out

    def df(s):
        t, x, u = split(s)
        out = np.zeros(s.shape[:-1] + (p, big, p))
        out[..., 1, 1:1 + d, 0] = d_t(t, x, u)
        out[..., 1, 1:1 + d, 1] = d_x(t, x, u)
        out[..., 1, 1:1 + d, 2:] = d_u(t, x, u)
        return out

    d2f = None
    if second is not None:
        def d2f(s):
            t, x, u = split(s)
            out = np.zeros(s.shape[:-1] + (p, big, p, p))
            out[..., 1, 1:1 + d, :, :] = second(t, x, u)
            return out

    return CoefficientField(f, df, d2f, big, state_dim=p, scalar=False, name="augmented")


def augmented_driver(u: SamplePath, clock: bool = True) -> SamplePath:
    """``(t, U, U)`` for a vector path ``U``, or ``(0, U, U)`` with ``clock=False``."""
    t = u.grid.nodes if clock else np.zeros(u.grid.steps + 1)
    shape = u.values.shape[:-1] + (1,)
    tt = np.broadcast_to(t[:, None], shape)
    values = np.concatenate([tt, u.values, u.values], axis=-1)
    pre = None if u.pre is None else np.concatenate([tt, u.left, u.left], axis=-1)
    return SamplePath(u.grid, values, rank=1, pre=pre, linear=u.linear)


def augmented_state(t0: float, x0, u0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    return np.concatenate([np.broadcast_to(t0, x0.shape)[..., None], x0[..., None], u0], axis=-1)


def augmented_correction(dtheta: np.ndarray, dim: int) -> np.ndarray:
    """Correction increment of ``(t, U, U)`` built from one of ``U``: all ``H (x) H`` blocks equal."""
    d = dim
    out = np.zeros(dtheta.shape[:-2] + (1 + 2 * d, 1 + 2 * d))
    for r in (slice(1, 1 + d), slice(1 + d, None)):
        for c in (slice(1, 1 + d), slice(1 + d, None)):
            out[..., r, c] = dtheta
    return out


# ---------------------------------------------------------------------------
# solvers

def _time_first(path: SamplePath) -> np.ndarray:
    return path.increments()


def _guard(x: np.ndarray, dead: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(x * x, axis=-1))
    bad = ~np.isfinite(norm) | (norm > BLOWUP)
    new = bad & ~dead
    if np.any(new):
        x[new] = np.nan
    return dead | bad


def _finish(field: CoefficientField, grid, aug: np.ndarray, dead: np.ndarray) -> SamplePath:
    n_dead = int(np.count_nonzero(dead))
    if n_dead:
        warnings.warn(f"{n_dead} replicate(s) aborted: state norm exceeded {BLOWUP:g}",
                      BlowUpWarning, stacklevel=3)
    pre = np.moveaxis(aug[0::2], 0, -2)
    values = np.moveaxis(aug[1::2], 0, -2)
    if field.scalar:
        pre, values = pre[..., 0], values[..., 0]
        rank = 0
    else:
        rank = 1
    if np.array_equal(pre, values, equal_nan=True):
        pre = None
    return SamplePath(grid, values, rank=rank, pre=pre)


def _start(field: CoefficientField, x0, batch: tuple[int, ...]) -> np.ndarray:
    x = field.as_state(x0)
    if x.shape[-1] != field.state_dim:
        raise ValueError(f"initial state has dimension {x.shape[-1]}, field expects {field.state_dim}")
    return np.broadcast_to(x, tuple(batch) + (field.state_dim,)).copy()


def solve_pathwise(field: CoefficientField, y: SamplePath, z: SamplePath, x0,
                   substeps: int = 4) -> SamplePath:
    """Left-point Euler scheme for ``dX = f(X-) dY + f(X-) dZ``.

    Jumps at nodes are applied in one step using the pre-jump state; each
    continuous cell increment is split into ``substeps`` equal pieces.
    Replicates whose state leaves the ball of radius ``1e8`` (or becomes
    non-finite) are set to NaN from then on and reported with a
    :class:`BlowUpWarning`; see :func:`aborted`.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    grid = check_common(y, z)
    drive = np.add(_time_first(y), _time_first(z))
    batch = drive.shape[1:-1]
    x = _start(field, x0, batch)
    dead = np.zeros(batch, dtype=bool)
    aug = np.empty((drive.shape[0] + 1,) + x.shape)
    aug[0] = x
    with np.errstate(all="ignore"):
        for k, inc in enumerate(drive):
            if not np.any(inc):
                pass
            elif k % 2 == 0:
                x = x + np.einsum("...ai,...i->...a", field.F(x), inc)
            else:
                piece = inc / substeps
                for _ in range(substeps):
                    x = x + np.einsum("...ai,...i->...a", field.F(x), piece)
            dead = _guard(x, dead)
            aug[k + 1] = x
    return _finish(field, grid, aug, dead)


def solve_limit(field: CoefficientField, y: SamplePath, theta: SamplePath, x0) -> SamplePath:
    """Euler-Maruyama scheme for ``dX = f(X-) dY + <T(X-), dTheta>``.

    ``T`` is :func:`correction_field`.  ``theta`` may be unbatched (a common
    deterministic correction) or batched like ``y``.
    """
    grid = check_common(y, theta)
    if theta.rank != 2:
        raise ValueError("theta must be tensor-valued")
    dy = _time_first(y)
    dth = _time_first(theta)
    batch = np.broadcast_shapes(dy.shape[1:-1], dth.shape[1:-2])
    x = _start(field, x0, batch)
    dead = np.zeros(batch, dtype=bool)
    aug = np.empty((dy.shape[0] + 1,) + x.shape)
    aug[0] = x
    with np.errstate(all="ignore"):
        for k in range(dy.shape[0]):
            inc, th = dy[k], dth[k]
            if k % 2 == 0 and not np.any(inc) and not np.any(th):
                aug[k + 1] = x
                continue
            step = np.einsum("...ai,...i->...a", field.F(x), inc)
            if np.any(th):
                step = step + np.einsum("...aij,...ij->...a", _tilde(field, x), th)
            x = x + step
            dead = _guard(x, dead)
            aug[k + 1] = x
    return _finish(field, grid, aug, dead)


def aborted(path: SamplePath) -> np.ndarray:
    """Per-replicate flag: did the solver abort this path."""
    bad = ~np.isfinite(path.values)
    nb = len(path.batch_shape)
    return bad.reshape(bad.shape[:nb] + (-1,)).any(axis=-1)


# ---------------------------------------------------------------------------
# derivative checker

@dataclass(frozen=True)
class DerivativeReport:
    first: float            # max relative deviation of Df
    second: float | None    # same for D2f, None when not supplied
    h: float
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.first <= self.tol and (self.second is None or self.second <= self.tol)


def _rel(a: np.ndarray, b: np.ndarray, scale: float) -> float:
    return float(np.max(np.abs(a - b)) / scale) if a.size else 0.0


def _fd_first(field, x, h):
    p = field.state_dim
    cols = []
    for b in range(p):
        e = np.zeros(p)
        e[b] = h
        cols.append((field.F(x + e) - field.F(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def _fd_second(field, x, h):
    p = field.state_dim
    out = np.empty(field.F(x).shape + (p, p))
    f0 = field.F(x)
    for b in range(p):
        eb = np.zeros(p)
        eb[b] = h
        for c in range(b, p):
            if b == c:
                val = (field.F(x + eb) - 2 * f0 + field.F(x - eb)) / h ** 2
            else:
                ec = np.zeros(p)
                ec[c] = h
                val = (field.F(x + eb + ec) - field.F(x + eb - ec)
                       - field.F(x - eb + ec) + field.F(x - eb - ec)) / (4 * h ** 2)
            out[..., b, c] = out[..., c, b] = val
    return out


def check_derivatives(field: CoefficientField, probes, h: float = 1e-4,
                      tol: float = 1e-4) -> DerivativeReport:
    """Compare analytic derivatives with central differences at ``probes``.

    The step is ``h * max(1, max|x|)``.  Deviations are relative to the size
    of the analytic derivative (floored at the size of ``f``).  When the plain
    difference misses ``tol``, a Richardson-extrapolated difference with steps
    ``h`` and ``h/2`` is tried before declaring failure.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x = field.as_state(np.asarray(probes, dtype=float))
    step = h * max(1.0, float(np.max(np.abs(x))))
    size_f = float(np.max(np.abs(field.F(x)))) or 1.0

    d1 = field.DF(x)
    scale1 = max(float(np.max(np.abs(d1))), size_f)
    fd = _fd_first(field, x, step)
    first = _rel(d1, fd, scale1)
    if first > tol:
        rich = (4 * _fd_first(field, x, step / 2) - fd) / 3
        first = min(first, _rel(d1, rich, scale1))

    second = None
    if field.d2f is not None:
        d2 = field.D2F(x)
        scale2 = max(float(np.max(np.abs(d2))), size_f)
        sd = _fd_second(field, x, step)
        second = _rel(d2, sd, scale2)
        if second > tol:
            rich = (4 * _fd_second(field, x, step / 2) - sd) / 3
            second = min(second, _rel(d2, rich, scale2))
    return DerivativeReport(first, second, step, tol)
