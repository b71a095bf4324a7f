"""Market parameters, portfolio state and the explicit Euler update of the dynamics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .mat import (
    CholeskyFactor,
    CovarianceMatrix,
    DimensionMismatch,
    build_covariance,
    cholesky,
    validate_correlation,
)


class NonPositiveWealth(ArithmeticError):
    """Total wealth reached zero or below; the path cannot continue."""

    def __init__(self, wealth: float, t: float):
        super().__init__(f"wealth {wealth:.6g} <= 0 at t={t:.6g}")
        self.wealth = wealth
        self.t = t


def _vector(x: ArrayLike, name: str) -> NDArray:
    v = np.atleast_1d(np.array(x, dtype=float))
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class MarketParams:
    """Constants of a market with one bond and ``n`` correlated log-normal assets.

    Parameters
    ----------
    r : float
        Risk-free rate.
    mu, sigma : array_like, shape (n,)
        Drifts and volatilities. Zero volatility is accepted for noiseless
        test markets; anything needing ``omega`` then raises.
    rho : array_like, shape (n, n)
        Correlation matrix of the driving Brownian motions.
    k : float
        Proportional transaction cost, ``0 <= k < 1``.
    T, dt : float
        Horizon and time step; ``T / dt`` is rounded to the nearest integer
        step count.
    """

    r: float
    mu: NDArray
    sigma: NDArray
    rho: NDArray
    k: float = 0.0
    T: float = 1.0
    dt: float = 1e-3
    mu_hat: NDArray = field(init=False, repr=False)

    def __post_init__(self):
        mu = _vector(self.mu, "mu")
        sigma = _vector(self.sigma, "sigma")
        if sigma.shape != mu.shape:
            raise DimensionMismatch(f"mu has {mu.size} entries but sigma has {sigma.size}")
        rho = np.array(validate_correlation(self.rho, mu.size))
        rho.setflags(write=False)
        if np.any(sigma < 0):
            raise ValueError("volatilities must be nonnegative")
        if not (0.0 <= self.k < 1.0):
            raise ValueError(f"transaction cost k must satisfy 0 <= k < 1, got {self.k}")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("T and dt must be positive")
        if self.T / self.dt < 1 - 1e-9:
            raise ValueError(f"horizon T={self.T} is shorter than one step dt={self.dt}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "dt", float(self.dt))
        mu_hat = mu - self.r
        mu_hat.setflags(write=False)
        object.__setattr__(self, "mu_hat", mu_hat)

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    @cached_property
    def omega(self) -> CovarianceMatrix:
        return build_covariance(self.sigma, self.rho)

    @cached_property
    def rho_factor(self) -> CholeskyFactor:
        """Cholesky factor of the correlation matrix; drives the noise."""
        return cholesky(self.rho)

    def replace(self, **changes) -> "MarketParams":
        fields = dict(r=self.r, mu=self.mu, sigma=self.sigma, rho=self.rho, k=self.k, T=self.T, dt=self.dt)
        fields.update(changes)
        return MarketParams(**fields)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "rho": self.rho.tolist(),
            "k": self.k,
            "T": self.T,
            "dt": self.dt,
        }


def two_asset_market(k: float = 0.005, T: float = 1.0, dt: float = 1e-3) -> MarketParams:
    """The two-asset reference market: r=1, mu=(1.3, 1.5), sigma=(1, 1), rho_12=0.5."""
    return MarketParams(
        r=1.0,
        mu=[1.3, 1.5],
        sigma=[1.0, 1.0],
        rho=[[1.0, 0.5], [0.5, 1.0]],
        k=k,
        T=T,
        dt=dt,
    )


def total_wealth(bond, holdings):
    """``bond + sum(holdings)`` summed left to right along the last axis."""
    total = bond
    for i in range(holdings.shape[-1]):
        total = total + holdings[..., i]
    return total


def diffuse(bond, holdings, mu, sigma, r, dt, z):
    """One explicit Euler update on levels.

    Works on a single state (``holdings`` of shape (n,)) or a batch (shape
    (P, n)) with identical per-element arithmetic. Returns the new bond, new
    holdings and the wealth increment computed from the drift/noise terms
    (an independent record of what the dynamics added).
    """
    sqrt_dt = math.sqrt(dt)
    bond_inc = r * bond * dt
    hold_inc = mu * holdings * dt + sigma * holdings * sqrt_dt * z
    gain = bond_inc
    for i in range(holdings.shape[-1]):
        gain = gain + hold_inc[..., i]
    return bond + bond_inc, holdings + hold_inc, gain


@dataclass(frozen=True, eq=False)
class PortfolioState:
    """Bond value, risky holdings and clock. Wealth is always recomputed."""

    t: float
    bond: float
    holdings: NDArray
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "holdings", _vector(self.holdings, "holdings"))
        object.__setattr__(self, "bond", float(self.bond))

    @property
    def wealth(self) -> float:
        return float(total_wealth(self.bond, self.holdings))

    @classmethod
    def allocate(cls, weights: ArrayLike, wealth: float = 1.0, t: float = 0.0, step: int = 0) -> "PortfolioState":
        """Split ``wealth`` into holdings ``weights * wealth`` and the rest in bond."""
        weights = _vector(weights, "weights")
        holdings = weights * wealth
        return cls(t=t, bond=wealth - float(total_wealth(0.0, holdings)), holdings=holdings, step=step)


def euler_step(state: PortfolioState, params: MarketParams, z: ArrayLike) -> PortfolioState:
    """Advance one tick with correlated standard normals ``z``.

    Raises
    ------
    NonPositiveWealth
        If the updated wealth is ``<= 0``.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (params.n,):
        raise DimensionMismatch(f"z has shape {z.shape}, expected ({params.n},)")
    if state.holdings.shape != (params.n,):
        raise DimensionMismatch("state and market disagree on the number of assets")
    if state.step + 1 > params.n_steps:
        raise ValueError(f"step {state.step + 1} is past the horizon T={params.T}")
    bond, holdings, _ = diffuse(state.bond, state.holdings, params.mu, params.sigma, params.r, params.dt, z)
    step = state.step + 1
    new = PortfolioState(t=step * params.dt, bond=bond, holdings=holdings, step=step)
    if not new.wealth > 0:
        raise NonPositiveWealth(new.wealth, new.t)
    return new


def pure_bond_growth(pi0: float, params: MarketParams, t: float) -> float:
    """Continuously compounded bond value ``pi0 * exp(r t)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return pi0 * math.exp(params.r * t)
