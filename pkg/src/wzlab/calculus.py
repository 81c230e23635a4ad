"""Partition sums for stochastic integrals, covariations and total variation.

All functions evaluate left-point Riemann sums on the augmented partition of
:mod:`wzlab.paths`, so jump increments are paired with pre-jump values.  On
cells where both paths are declared ``linear`` the integral is taken exactly
(``X_k dY + dX dY / 2``) and the cell contributes nothing to covariations,
which is what the true integral of two straight segments gives.

Because every quantity is a finite sum over one and the same partition, the
integration-by-parts, chain-rule and covariation identities hold exactly up
to float rounding.
"""

from __future__ import annotations

import numpy as np

from .paths import GridError, SamplePath, check_common, from_augmented

# (rank of integrand, rank of integrator) -> (einsum signature, result rank)
_PAIRINGS = {
    (0, 0): ("...,...->...", 0),
    (0, 1): ("...,...i->...i", 1),
    (1, 0): ("...i,...->...i", 1),
    (1, 1): ("...i,...i->...", 0),
    (2, 1): ("...ij,...j->...i", 1),
    (2, 2): ("...ij,...ij->...", 0),
}
_OUTER = "...i,...j->...ij"


def _cell_mask(n_incr: int, ndim: int) -> np.ndarray:
    # odd augmented increments are the continuous part of each grid cell
    mask = np.zeros(n_incr, dtype=bool)
    mask[1::2] = True
    return mask.reshape((n_incr,) + (1,) * (ndim - 1))


def _running(grid, terms: np.ndarray, rank: int, linear: bool = False) -> SamplePath:
    aug = np.zeros((terms.shape[0] + 1,) + terms.shape[1:])
    np.cumsum(terms, axis=0, out=aug[1:])
    return from_augmented(grid, aug, rank, linear)


def integral_terms(x: SamplePath, y: SamplePath, signature: str) -> np.ndarray:
    """Per-increment contributions of ``int x(s-) . dy(s)`` for a bilinear pairing."""
    check_common(x, y)
    left = x.augmented()[:-1]
    dy = y.increments()
    terms = np.einsum(signature, left, dy)
    if x.linear and y.linear:
        dx = x.increments()
        corr = 0.5 * np.einsum(signature, dx, dy)
        terms = terms + np.where(_cell_mask(len(terms), terms.ndim), corr, 0.0)
    return terms


def covariation_terms(x: SamplePath, y: SamplePath, signature: str) -> np.ndarray:
    check_common(x, y)
    terms = np.einsum(signature, x.increments(), y.increments())
    if x.linear and y.linear:
        terms = np.where(_cell_mask(len(terms), terms.ndim), 0.0, terms)
    return terms


def _signature(x: SamplePath, y: SamplePath) -> tuple[str, int]:
    try:
        return _PAIRINGS[(x.rank, y.rank)]
    except KeyError:
        raise GridError(f"no pairing for integrand rank {x.rank} and integrator rank {y.rank}")


def integral_left(x: SamplePath, y: SamplePath) -> SamplePath:
    """Left-point integral ``int_0^t x(s-) dy(s)`` with the natural pairing.

    Supported rank pairs: real/real, real/vector, vector/real (scaling),
    vector/vector (inner product), tensor/vector (operator action) and
    tensor/tensor (Hilbert-Schmidt pairing).
    """
    sig, rank = _signature(x, y)
    return _running(x.grid, integral_terms(x, y, sig), rank)


def tensor_integral_left(x: SamplePath, y: SamplePath) -> SamplePath:
    """``int_0^t x(s-) (x) dy(s)`` as a tensor-valued path."""
    if x.rank != 1 or y.rank != 1:
        raise GridError("tensor integrals take two vector-valued paths")
    return _running(x.grid, integral_terms(x, y, _OUTER), 2)


def tensor_integral_right(y: SamplePath, x: SamplePath) -> SamplePath:
    """``int_0^t dy(s) (x) x(s-)``, the adjoint of :func:`tensor_integral_left`."""
    if x.rank != 1 or y.rank != 1:
        raise GridError("tensor integrals take two vector-valued paths")
    return _running(x.grid, integral_terms(x, y, "...j,...i->...ij"), 2)


def tensor_covariation(x: SamplePath, y: SamplePath) -> SamplePath:
    """Running ``sum dx (x) dy`` over the partition."""
    if x.rank != 1 or y.rank != 1:
        raise GridError("tensor covariation takes two vector-valued paths")
    return _running(x.grid, covariation_terms(x, y, _OUTER), 2)


def scalar_covariation(x: SamplePath, y: SamplePath) -> SamplePath:
    """Running ``sum <dx, dy>``; equals the trace of :func:`tensor_covariation`."""
    sig, rank = _signature(x, y)
    if rank != 0:
        raise GridError("scalar covariation needs paths of equal rank")
    return _running(x.grid, covariation_terms(x, y, sig), 0)


def covariation(x: SamplePath, y: SamplePath) -> SamplePath:
    """Covariation with the same pairing as :func:`integral_left`."""
    sig, rank = _signature(x, y)
    return _running(x.grid, covariation_terms(x, y, sig), rank)


def _norms(incr: np.ndarray, rank: int) -> np.ndarray:
    if rank == 0:
        return np.abs(incr)
    axes = tuple(range(incr.ndim - rank, incr.ndim))
    return np.sqrt(np.sum(incr * incr, axis=axes))


def total_variation(phi: SamplePath) -> SamplePath:
    """Running sum of increment norms (HS norm for tensors) on the stored partition."""
    return _running(phi.grid, _norms(phi.increments(), phi.rank), 0)


def total_variation_at_end(phi: SamplePath) -> np.ndarray:
    return _norms(phi.increments(), phi.rank).sum(axis=0)


def contract_integral(j: SamplePath, theta: SamplePath) -> SamplePath:
    """``sum <J(t_i-), d Theta>_HS``: a tensor integrand against a tensor integrator."""
    if j.rank != 2 or theta.rank != 2:
        raise GridError("contract_integral pairs two tensor-valued paths")
    return integral_left(j, theta)


def pointwise(fn, *paths: SamplePath, rank: int) -> SamplePath:
    """Apply ``fn`` nodewise to the values and left limits of ``paths``.

    Used to build composite integrands such as ``J (x) V`` or ``J(X)``.
    """
    grid = check_common(*paths)
    values = fn(*[p.values for p in paths])
    pre = None
    if any(p.pre is not None for p in paths):
        pre = fn(*[p.left for p in paths])
    return SamplePath(grid, values, rank, pre)
