from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntband.mat import (
    DimensionMismatch,
    InvalidCorrelation,
    NotPositiveDefinite,
    build_covariance,
    cholesky,
    correlated_normals,
    solve_spd,
)

RHO_HALF = [[1.0, 0.5], [0.5, 1.0]]


def test_build_covariance_examples():
    assert np.array_equal(build_covariance([1, 1], RHO_HALF).omega, RHO_HALF)
    assert np.array_equal(build_covariance([2, 3], np.eye(2)).omega, np.diag([4.0, 9.0]))
    assert np.array_equal(build_covariance([1.0], [[1.0]]).omega, [[1.0]])


def test_build_covariance_invariants():
    rng = np.random.default_rng(3)
    sigma = rng.uniform(0.1, 2, 4)
    w = rng.normal(size=(4, 6))
    c = w @ w.T
    rho = c / np.sqrt(np.outer(np.diag(c), np.diag(c)))
    rho = (rho + rho.T) / 2
    np.fill_diagonal(rho, 1.0)
    om = build_covariance(sigma, rho).omega
    assert np.array_equal(om, om.T)
    assert np.array_equal(np.diag(om), sigma ** 2)


@pytest.mark.parametrize(
    "sigma, rho, exc",
    [
        ([1, 1], np.eye(3), DimensionMismatch),
        ([1, 1], [[1, 0.2], [0.3, 1]], InvalidCorrelation),
        ([1, 1], [[0.9, 0.2], [0.2, 1]], InvalidCorrelation),
        ([1, 1], [[1, 1.2], [1.2, 1]], InvalidCorrelation),
        ([1, 0], np.eye(2), ValueError),
    ],
)
def test_build_covariance_rejects(sigma, rho, exc):
    with pytest.raises(exc):
        build_covariance(sigma, rho)


def test_cholesky_examples():
    l = cholesky(build_covariance([1, 1], RHO_HALF)).l
    assert np.allclose(l, [[1, 0], [0.5, 0.8660254037844386]], rtol=0, atol=1e-15)
    assert np.array_equal(cholesky(np.diag([4.0, 9.0])).l, np.diag([2.0, 3.0]))
    with pytest.raises(NotPositiveDefinite):
        cholesky([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(NotPositiveDefinite):
        cholesky([[1.0, 2.0], [2.0, 1.0]])


def _random_spd(rng, n):
    w = rng.normal(size=(n, n + 3))
    a = w @ w.T + 0.1 * np.eye(n)
    return (a + a.T) / 2


@pytest.mark.parametrize("n", range(1, 9))
def test_reconstruction_and_solve_residual(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        a = _random_spd(rng, n)
        l = cholesky(a).l
        assert np.array_equal(l, np.tril(l))
        assert np.all(np.diag(l) > 0)
        assert np.max(np.abs(l @ l.T - a)) <= 1e-12 * np.max(np.abs(a))
        b = rng.normal(size=n)
        x = solve_spd(a, b)
        assert np.max(np.abs(a @ x - b)) <= 1e-12 * np.max(np.abs(b))


def test_solve_spd_examples():
    # closed-form 2x2 inverse in exact arithmetic
    det = Fraction(1) - Fraction(1, 4)
    exact = [(Fraction(3, 10) - Fraction(1, 2) * Fraction(1, 2)) / det,
             (Fraction(1, 2) - Fraction(1, 2) * Fraction(3, 10)) / det]
    assert exact == [Fraction(1, 15), Fraction(7, 15)]
    x = solve_spd(build_covariance([1, 1], RHO_HALF), [0.3, 0.5])
    assert np.allclose(x, [float(v) for v in exact], rtol=1e-14)
    b = np.array([0.3, -2.0, 7.0])
    assert np.allclose(solve_spd(np.eye(3), b), b, rtol=0, atol=0)
    assert np.allclose(solve_spd(np.diag([4.0, 9.0]), [4.0, 9.0]), [1.0, 1.0], rtol=1e-15)
    with pytest.raises(DimensionMismatch):
        solve_spd(np.eye(2), [1.0, 2.0, 3.0])


def test_correlated_normals_examples():
    assert np.array_equal(correlated_normals(np.eye(2), [0.3, -1.2]), [0.3, -1.2])
    l = [[1, 0], [0.5, 0.8660254]]
    assert np.allclose(correlated_normals(l, [1.0, 0.0]), [1.0, 0.5], rtol=0, atol=1e-15)
    with pytest.raises(DimensionMismatch):
        correlated_normals(np.eye(2), [1.0, 2.0, 3.0])


def test_correlated_normals_batch_matches_single():
    rng = np.random.default_rng(0)
    l = cholesky(_random_spd(rng, 4))
    z = rng.normal(size=(50, 4))
    batch = correlated_normals(l, z)
    for row, zz in zip(batch, z):
        assert np.array_equal(row, correlated_normals(l, zz))


def test_sample_correlation_one_million():
    rng = np.random.default_rng(12345)
    l = cholesky(build_covariance([1, 1], RHO_HALF))
    x = correlated_normals(l, rng.standard_normal((1_000_000, 2)))
    r = np.corrcoef(x.T)[0, 1]
    assert abs(r - 0.5) < 0.005
    assert np.allclose(x.std(axis=0), 1.0, atol=0.005)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2 ** 32 - 1))
def test_sample_correlation_matches_rho(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(n, n + 2))
    c = w @ w.T
    rho = c / np.sqrt(np.outer(np.diag(c), np.diag(c)))
    rho = (rho + rho.T) / 2
    np.fill_diagonal(rho, 1.0)
    x = correlated_normals(cholesky(rho), rng.standard_normal((100_000, n)))
    assert np.max(np.abs(np.corrcoef(x.T) - rho)) < 0.02
