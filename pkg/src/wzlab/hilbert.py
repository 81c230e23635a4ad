"""Finite-truncation linear algebra on a Hilbert space.

Elements of H are coefficient vectors of shape ``(d,)`` against a fixed
orthonormal basis ``{e_j}``; Hilbert-Schmidt tensors in H (x) H are ``(d, d)``
arrays with entry ``(i, j) = <A, e_i (x) e_j>_HS``.  Every function accepts
arbitrary leading batch axes and broadcasts over them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when operands do not share a truncation dimension."""


@dataclass(frozen=True)
class TruncationSpec:
    """Truncation dimension ``d`` of the basis ``{e_1, ..., e_d}``."""

    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dim)

    def basis(self, j: int) -> np.ndarray:
        e = np.zeros(self.dim)
        e[j] = 1.0
        return e

    def identity(self) -> np.ndarray:
        return np.eye(self.dim)

    def check_vector(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-1:] != (self.dim,):
            raise DimensionError(f"expected trailing dim {self.dim}, got shape {u.shape}")
        return u

    def check_tensor(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape[-2:] != (self.dim, self.dim):
            raise DimensionError(
                f"expected trailing shape {(self.dim, self.dim)}, got {a.shape}")
        return a


def _vec(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim < 1:
        raise DimensionError("expected a coefficient vector, got a scalar")
    return u


def _square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"expected square tensor, got shape {a.shape}")
    return a


def _finite(a: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor has non-finite entries")
    return a


def tensor_product(u, v) -> np.ndarray:
    """Return ``u (x) v`` with entries ``u_i v_j``."""
    u, v = _vec(u), _vec(v)
    if u.shape[-1] != v.shape[-1]:
        raise DimensionError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    return u[..., :, None] * v[..., None, :]


def apply(a, y) -> np.ndarray:
    """Action of a tensor on a vector, ``(u (x) v)(y) = <v, y> u``."""
    a, y = np.asarray(a, dtype=float), _vec(y)
    if a.ndim < 2 or a.shape[-1] != y.shape[-1]:
        raise DimensionError(f"cannot apply shape {a.shape} to vector {y.shape}")
    return np.einsum("...ij,...j->...i", a, y)


def adjoint(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim < 2:
        raise DimensionError(f"expected a tensor, got shape {a.shape}")
    return np.swapaxes(a, -1, -2)


def trace(a) -> np.ndarray | float:
    a = _finite(_square(a))
    return np.trace(a, axis1=-2, axis2=-1)


def hs_inner(a, b) -> np.ndarray | float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape[-2:] != b.shape[-2:]:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    _finite(a), _finite(b)
    return np.einsum("...ij,...ij->...", a, b)


def hs_norm(a) -> np.ndarray | float:
    a = _finite(np.asarray(a, dtype=float))
    if a.ndim < 2:
        raise DimensionError(f"expected a tensor, got shape {a.shape}")
    return np.sqrt(np.einsum("...ij,...ij->...", a, a))


def op_norm(a, tol: float = 1e-8) -> float:
    """Largest singular value of a single tensor.

    Power iteration on ``A^T A`` from the normalised all-ones vector, at most
    ``10 d`` iterations.  If the iteration stalls (start vector orthogonal to
    the top singular space, or no convergence within the budget) the value
    falls back to a dense SVD.
    """
    a = _finite(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise DimensionError(f"op_norm takes a single 2-D tensor, got {a.shape}")
    d = a.shape[1]
    if not np.any(a):
        return 0.0
    ata = a.T @ a
    v = np.ones(d) / np.sqrt(d)
    lam, step = None, None
    for _ in range(10 * d):
        w = ata @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
        lam_new = float(v @ ata @ v)
        if lam is None:
            lam = lam_new
            continue
        change = abs(lam_new - lam)
        if change == 0.0:
            return float(np.sqrt(lam_new))
        if step is not None and change < step:
            # geometric tail bound on the remaining Rayleigh-quotient error
            q = change / step
            if change * q / (1.0 - q) <= tol * lam_new:
                return float(np.sqrt(lam_new))
        lam, step = lam_new, change
    return float(np.linalg.norm(a, 2))
