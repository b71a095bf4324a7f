"""Small dense symmetric linear algebra.

Covariance construction, Cholesky factorization with an explicit pivot test,
triangular solves and correlated normal draws. Matrices here are tiny
(n <= 16), so everything is plain O(n^3) numpy without LAPACK calls; the
loops are written so that batched and single-vector calls give bit-identical
results.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

PIVOT_RTOL = 1e-14


class DimensionMismatch(ValueError):
    """Array shapes do not agree."""


class InvalidCorrelation(ValueError):
    """Correlation matrix is not symmetric, has a non-unit diagonal or entries outside [-1, 1]."""


class NotPositiveDefinite(ValueError):
    """A Cholesky pivot was not strictly positive."""


def _readonly(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Instantaneous covariance ``omega[i, j] = sigma_i * sigma_j * rho_ij``."""

    omega: NDArray

    def __post_init__(self):
        object.__setattr__(self, "omega", _readonly(self.omega))

    @property
    def n(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Lower-triangular ``l`` with ``l @ l.T == omega``."""

    l: NDArray

    def __post_init__(self):
        object.__setattr__(self, "l", _readonly(self.l))

    @property
    def n(self) -> int:
        return self.l.shape[0]


def validate_correlation(rho: ArrayLike, n: int | None = None) -> NDArray:
    """Return ``rho`` as a float array after checking shape, symmetry, diagonal and bounds."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"correlation matrix must be square, got shape {rho.shape}")
    if n is not None and rho.shape[0] != n:
        raise DimensionMismatch(f"correlation matrix is {rho.shape[0]}x{rho.shape[0]}, expected {n}x{n}")
    if not np.all(np.isfinite(rho)):
        raise InvalidCorrelation("correlation matrix has non-finite entries")
    if np.any(rho != rho.T):
        raise InvalidCorrelation("correlation matrix is not symmetric")
    if np.any(np.diag(rho) != 1.0):
        raise InvalidCorrelation("correlation matrix must have a unit diagonal")
    if np.any(np.abs(rho) > 1.0):
        raise InvalidCorrelation("correlation entries must lie in [-1, 1]")
    return rho


def build_covariance(sigma: ArrayLike, rho: ArrayLike) -> CovarianceMatrix:
    """Build ``Omega_ij = sigma_i sigma_j rho_ij`` from volatilities and correlations.

    Raises
    ------
    DimensionMismatch
        If ``sigma`` and ``rho`` disagree in size.
    InvalidCorrelation
        If ``rho`` is not a valid correlation matrix.
    ValueError
        If any volatility is not strictly positive.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if sigma.ndim != 1:
        raise DimensionMismatch("sigma must be a vector")
    rho = validate_correlation(rho, sigma.shape[0])
    if not np.all(sigma > 0):
        raise ValueError("volatilities must be strictly positive")
    omega = np.outer(sigma, sigma) * rho
    # outer product is symmetric elementwise, but force it so the invariant is exact
    omega = np.triu(omega) + np.triu(omega, 1).T
    return CovarianceMatrix(omega)


def cholesky(omega: CovarianceMatrix | ArrayLike) -> CholeskyFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    A pivot ``<= 1e-14 * max(diag)`` is rejected; semidefinite input is not
    regularized.
    """
    a = omega.omega if isinstance(omega, CovarianceMatrix) else np.asarray(omega, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = float(np.max(np.diag(a))) if n else 0.0
    tol = PIVOT_RTOL * scale
    l = np.zeros((n, n))
    for j in range(n):
        pivot = a[j, j] - np.dot(l[j, :j], l[j, :j])
        if not pivot > tol:
            raise NotPositiveDefinite(f"pivot {j} is {pivot:.3e} (tolerance {tol:.1e})")
        l[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            l[i, j] = (a[i, j] - np.dot(l[i, :j], l[j, :j])) / l[j, j]
    return CholeskyFactor(l)


def forward_substitute(l: NDArray, b: NDArray) -> NDArray:
    n = l.shape[0]
    y = np.zeros(n)
    for i in range(n):
        y[i] = (b[i] - np.dot(l[i, :i], y[:i])) / l[i, i]
    return y


def back_substitute_transpose(l: NDArray, y: NDArray) -> NDArray:
    """Solve ``l.T @ x = y`` for lower-triangular ``l``."""
    n = l.shape[0]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - np.dot(l[i + 1:, i], x[i + 1:])) / l[i, i]
    return x


def solve_spd(omega: CovarianceMatrix | ArrayLike, b: ArrayLike) -> NDArray:
    """Solve ``omega @ x = b`` by factorize-and-substitute; never forms an inverse."""
    factor = cholesky(omega)
    b = np.asarray(b, dtype=float)
    if b.shape != (factor.n,):
        raise DimensionMismatch(f"right-hand side has shape {b.shape}, expected ({factor.n},)")
    return back_substitute_transpose(factor.l, forward_substitute(factor.l, b))


def correlated_normals(l: CholeskyFactor | ArrayLike, z_iid: ArrayLike) -> NDArray:
    """Map iid standard normals to correlated ones, ``L @ z`` along the last axis.

    Accepts any leading batch shape. Each output component is accumulated in
    a fixed column order, so a single draw and the same draw inside a batch
    produce identical bits.
    """
    l = l.l if isinstance(l, CholeskyFactor) else np.asarray(l, dtype=float)
    z = np.asarray(z_iid, dtype=float)
    n = l.shape[0]
    if z.shape[-1:] != (n,):
        raise DimensionMismatch(f"expected trailing dimension {n}, got shape {z.shape}")
    out = np.empty_like(z)
    for i in range(n):
        acc = l[i, 0] * z[..., 0]
        for j in range(1, i + 1):
            acc = acc + l[i, j] * z[..., j]
        out[..., i] = acc
    return out
