"""Optimal allocation, no-transaction band widths and the band trade rule.

The frictionless optimum holds ``A* = -(H0'/H0'') * inv(Omega) @ mu_hat``
in the risky assets, where ``H0`` is the zero-cost value function. With a
small proportional cost ``k`` the investor leaves each holding alone while
``|A_i - A*_i| <= alpha_i`` and trades back to the nearest band edge
otherwise. The half-widths come from the leading-order asymptotics

    alpha_i = | 3 D_ii / sigma_i**2 * H0' / H0'' | ** (1/3) * k ** (1/3)

with ``D`` built from ``A*``, its wealth slope and ``Omega``. For the
log-utility (long term growth) model everything is closed form.
"""
from __future__ import annotations

import abc
import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .mat import solve_spd
from .model import MarketParams, NonPositiveWealth, PortfolioState


class DomainError(ValueError):
    """Argument outside the domain of a value function (e.g. wealth <= 0)."""


class SingularCurvature(ZeroDivisionError):
    """The value function has zero curvature in wealth; band widths are undefined."""


class BandAsymptoticsWarning(UserWarning):
    """A band-width bracket came out negative and was folded through ``abs``."""


class RegionLabel(enum.Enum):
    SALE = "sale"
    PURCHASE = "purchase"
    NO_TRANSACTION = "no_transaction"


@dataclass(frozen=True)
class TradeEvent:
    """One rebalance of one asset. ``level`` is the holding after the trade."""

    t: float
    asset: int
    side: str
    amount: float
    cost: float
    level: float


# -- frictionless optimum ---------------------------------------------------


def optimal_weights(params: MarketParams) -> NDArray:
    """Log-optimal risky weights ``p = inv(Omega) @ mu_hat``."""
    return solve_spd(params.omega, params.mu_hat)


def uncorrelated_weights(params: MarketParams) -> NDArray:
    """Weights obtained when correlations are ignored, ``mu_hat_i / sigma_i**2``."""
    return optimal_weights(params.replace(rho=np.eye(params.n)))


def growth_rate(params: MarketParams, weights: ArrayLike) -> float:
    """Expected growth of log wealth for constant weights: ``r q + mu.p - p'Omega p / 2``."""
    p = np.asarray(weights, dtype=float)
    if p.shape != (params.n,):
        raise ValueError(f"weights must have shape ({params.n},)")
    q = 1.0 - p.sum()
    cov = np.outer(params.sigma, params.sigma) * params.rho
    beta2 = float(p @ cov @ p)
    return params.r * q + float(params.mu @ p) - 0.5 * beta2


def expected_log_payoff(params: MarketParams, pi0: float, weights: ArrayLike) -> float:
    """``E[log Pi(T)]`` when the weights ``p`` are held constant over ``[0, T]``."""
    if not pi0 > 0:
        raise DomainError(f"initial wealth must be positive, got {pi0}")
    return math.log(pi0) + growth_rate(params, weights) * params.T


def ltgm_value(pi, t, params: MarketParams):
    """Zero-cost value function of the log-utility model,
    ``log(pi) + (r + mu_hat . inv(Omega) mu_hat / 2) (T - t)``."""
    return LtgmModel(params).h0(pi, t)


# -- utility models ----------------------------------------------------------


class UtilityModel(abc.ABC):
    """Zero-cost value function ``H0(pi, t)`` and the optimal curve it induces.

    Subclasses supply ``h0`` and its first two wealth derivatives; the
    optimal holdings then follow from the first-order condition. All methods
    broadcast over array-valued ``pi``; curve methods return shape
    ``pi.shape + (n,)``.
    """

    #: step of the central difference used for the curve slope, relative to wealth
    slope_rel_step = 1e-6

    def __init__(self, params: MarketParams):
        self.params = params

    @abc.abstractmethod
    def h0(self, pi, t): ...

    @abc.abstractmethod
    def dh0_dpi(self, pi, t): ...

    @abc.abstractmethod
    def d2h0_dpi2(self, pi, t): ...

    @abc.abstractmethod
    def terminal_utility(self, pi): ...

    def running_utility(self, pi):
        return np.zeros_like(np.asarray(pi, dtype=float))

    def optimal_curve(self, pi, t) -> NDArray:
        pi = np.asarray(pi, dtype=float)
        d2 = np.asarray(self.d2h0_dpi2(pi, t), dtype=float)
        if np.any(d2 == 0):
            raise SingularCurvature("second wealth derivative of H0 is zero")
        scale = -np.asarray(self.dh0_dpi(pi, t), dtype=float) / d2
        return scale[..., None] * optimal_weights(self.params)

    def curve_slope(self, pi, t) -> NDArray:
        """d A* / d pi by central differences."""
        pi = np.asarray(pi, dtype=float)
        h = self.slope_rel_step * pi
        up = self.optimal_curve(pi + h, t)
        down = self.optimal_curve(pi - h, t)
        return (up - down) / (2.0 * h)[..., None]


class LtgmModel(UtilityModel):
    """Log utility of terminal wealth (long term growth / Kelly).

    ``H0 = log(pi) + g (T - t)`` with ``g = r + mu_hat . p / 2`` and
    ``A* = pi * p``.
    """

    def __init__(self, params: MarketParams):
        super().__init__(params)
        self.weights = optimal_weights(params)
        self.weights.setflags(write=False)
        self.bond_weight = 1.0 - float(self.weights.sum())
        self.growth = params.r + 0.5 * float(params.mu_hat @ self.weights)

    @staticmethod
    def _check(pi):
        pi = np.asarray(pi, dtype=float)
        if np.any(~(pi > 0)):
            raise DomainError("wealth must be positive")
        return pi

    def h0(self, pi, t):
        pi = self._check(pi)
        return np.log(pi) + self.growth * (self.params.T - np.asarray(t, dtype=float))

    def dh0_dpi(self, pi, t):
        return 1.0 / self._check(pi)

    def d2h0_dpi2(self, pi, t):
        return -1.0 / self._check(pi) ** 2

    def terminal_utility(self, pi):
        return np.log(self._check(pi))

    def optimal_curve(self, pi, t):
        return np.asarray(pi, dtype=float)[..., None] * self.weights

    def curve_slope(self, pi, t):
        return np.broadcast_to(self.weights, np.shape(pi) + (self.params.n,)).copy()


# -- band widths ------------------------------------------------------------


def d_matrix(params: MarketParams, utility: UtilityModel, pi, t) -> NDArray:
    """Diffusion coefficients ``D_ij`` of the fast band variable, shape ``pi.shape + (n, n)``.

    ``D_ij = s_i s_j (A*' Omega A*) / 2 + Omega_ij A*_i A*_j / 2 - s_i A*_i (Omega A*)_i``
    where ``s = dA*/dpi``. The last term has no ``j`` dependence; only the
    diagonal enters the band widths.
    """
    omega = params.omega.omega
    n = params.n
    a = utility.optimal_curve(pi, t)
    s = utility.curve_slope(pi, t)
    omega_a = [sum(omega[i, h] * a[..., h] for h in range(n)) for i in range(n)]
    quad = sum(a[..., i] * omega_a[i] for i in range(n))
    d = np.empty(a.shape + (n,))
    for i in range(n):
        for j in range(n):
            d[..., i, j] = (
                0.5 * s[..., i] * s[..., j] * quad
                + 0.5 * omega[i, j] * a[..., i] * a[..., j]
                - s[..., i] * a[..., i] * omega_a[i]
            )
    return d


def band_width_general(d_ii, sigma_i, dh0_dpi, d2h0_dpi2, k):
    """Half-width ``|3 D_ii / sigma_i^2 * H0' / H0''|^(1/3) * k^(1/3)``; broadcasts."""
    d2h0_dpi2 = np.asarray(d2h0_dpi2, dtype=float)
    if np.any(d2h0_dpi2 == 0):
        raise SingularCurvature("second wealth derivative of H0 is zero")
    if np.any(np.asarray(sigma_i) <= 0) or np.any(np.asarray(k) < 0):
        raise ValueError("need sigma > 0 and k >= 0")
    if np.any(np.asarray(d_ii) < 0):
        warnings.warn("negative D_ii; widths use its absolute value", BandAsymptoticsWarning, stacklevel=2)
    ratio = 3.0 * np.asarray(d_ii) / np.asarray(sigma_i) ** 2 * (np.asarray(dh0_dpi) / d2h0_dpi2)
    return np.cbrt(np.abs(ratio)) * np.cbrt(k)


def ltgm_band_bracket(params: MarketParams) -> NDArray:
    """``(mu_hat.p + sigma_i^2) p_i^2 / 2 - mu_hat_i p_i^2`` for each asset (``D_ii / pi^2``).

    Since ``Omega p = mu_hat`` this equals ``(p - e_i)' Omega (p - e_i) p_i^2 / 2``,
    so it is nonnegative up to rounding.
    """
    p = optimal_weights(params)
    m = float(params.mu_hat @ p)
    return 0.5 * (m + params.sigma ** 2) * p ** 2 - params.mu_hat * p ** 2


def band_width_ltgm(params: MarketParams, k: float, pi=1.0) -> NDArray:
    """Closed-form band half-widths of the log-utility model.

    ``alpha_i = pi * (3 k / sigma_i^2 * bracket_i) ** (1/3)``; a negative
    bracket is folded through ``abs`` with a :class:`BandAsymptoticsWarning`.
    Returns shape ``np.shape(pi) + (n,)``.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    bracket = ltgm_band_bracket(params)
    if np.any(bracket < 0):
        warnings.warn(
            f"negative band bracket {bracket.tolist()}; widths use its absolute value",
            BandAsymptoticsWarning,
            stacklevel=2,
        )
    coef = np.cbrt(np.abs(3.0 * k / params.sigma ** 2 * bracket))
    return np.asarray(pi, dtype=float)[..., None] * coef


def band_coefficients(params: MarketParams) -> NDArray:
    """Widths per unit ``k^(1/3) pi``."""
    return band_width_ltgm(params, 1.0, 1.0)


def uncorrelated_band_coefficients(params: MarketParams) -> NDArray:
    """Width coefficients computed as if all correlations were zero."""
    return band_coefficients(params.replace(rho=np.eye(params.n)))


@dataclass(frozen=True, eq=False)
class BandPolicy:
    """No-transaction bands ``[A* - alpha, A* + alpha]`` plus the cost charged per trade.

    Parameters
    ----------
    utility : UtilityModel or None
        Supplies the optimal curve and, unless overridden, the widths. May be
        None when both ``weights`` and ``width_coefficients`` are given.
    k : float
        Cost rate charged on each traded amount (and used for the widths).
    weights : array_like, optional
        Fixed-proportion curve ``A* = pi * weights`` replacing the utility's curve.
    width_coefficients : array_like, optional
        Fixed ``alpha / (k^(1/3) pi)`` per asset replacing the computed widths.
    """

    utility: UtilityModel | None
    k: float
    weights: NDArray | None = None
    width_coefficients: NDArray | None = None

    def __post_init__(self):
        if self.utility is None and (self.weights is None or self.width_coefficients is None):
            raise ValueError("a policy without a utility model needs fixed weights and widths")
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.width_coefficients is not None:
            c = np.asarray(self.width_coefficients, dtype=float)
            if np.any(c < 0):
                raise ValueError("width coefficients must be nonnegative")
            object.__setattr__(self, "width_coefficients", c)
        # LTGM widths are linear in wealth: cache the per-unit-wealth coefficient
        coef = None
        if self.width_coefficients is not None:
            coef = self.width_coefficients * np.cbrt(self.k)
        elif isinstance(self.utility, LtgmModel):
            coef = band_width_ltgm(self.utility.params, self.k, 1.0)
        object.__setattr__(self, "_unit_widths", coef)

    @property
    def params(self) -> MarketParams:
        return self.utility.params

    def curve(self, pi, t) -> NDArray:
        if self.weights is not None:
            return np.asarray(pi, dtype=float)[..., None] * self.weights
        return self.utility.optimal_curve(pi, t)

    def widths(self, pi, t) -> NDArray:
        if self._unit_widths is not None:
            return np.asarray(pi, dtype=float)[..., None] * self._unit_widths
        u = self.utility
        d = d_matrix(self.params, u, pi, t)
        d_ii = np.diagonal(d, axis1=-2, axis2=-1)
        return band_width_general(
            d_ii, self.params.sigma,
            np.asarray(u.dh0_dpi(pi, t))[..., None],
            np.asarray(u.d2h0_dpi2(pi, t))[..., None],
            self.k,
        )

    def bounds(self, pi, t) -> tuple[NDArray, NDArray]:
        a = self.curve(pi, t)
        w = self.widths(pi, t)
        return a - w, a + w


def _n_assets(utility, weights) -> int:
    return len(weights) if weights is not None else utility.params.n


def frictionless_policy(utility: UtilityModel | None, weights=None) -> BandPolicy:
    """Rebalance exactly onto the curve at no cost (``utility`` may be None if ``weights`` is given)."""
    return BandPolicy(utility, 0.0, weights=weights, width_coefficients=np.zeros(_n_assets(utility, weights)))


def naive_policy(utility: UtilityModel | None, k: float, weights=None) -> BandPolicy:
    """Rebalance exactly onto the curve, paying ``k`` on every trade."""
    return BandPolicy(utility, k, weights=weights, width_coefficients=np.zeros(_n_assets(utility, weights)))


# -- trade rule ---------------------------------------------------------------


def classify(state: PortfolioState, policy: BandPolicy) -> list[RegionLabel]:
    """Region of each holding relative to the bands evaluated at the current wealth.

    The band is closed: a holding exactly on an edge needs no trade.
    """
    lower, upper = policy.bounds(state.wealth, state.t)
    labels = []
    for a, lo, hi in zip(state.holdings, lower, upper):
        if a > hi:
            labels.append(RegionLabel.SALE)
        elif a < lo:
            labels.append(RegionLabel.PURCHASE)
        else:
            labels.append(RegionLabel.NO_TRANSACTION)
    return labels


def apply_trades(bond, holdings, lower, upper, k):
    """Move every holding outside ``[lower, upper]`` to the nearest edge.

    Sales credit ``(1 - k) * amount`` to the bond, purchases debit
    ``(1 + k) * amount``. Broadcasts over a leading path axis with per-element
    arithmetic only. Returns ``(bond, holdings, bought, sold)``.
    """
    sell = holdings > upper
    buy = holdings < lower
    sold = np.where(sell, holdings - upper, 0.0)
    bought = np.where(buy, lower - holdings, 0.0)
    new_holdings = np.where(sell, upper, np.where(buy, lower, holdings))
    for i in range(holdings.shape[-1]):
        bond = bond + (1.0 - k) * sold[..., i] - (1.0 + k) * bought[..., i]
    return bond, new_holdings, bought, sold


def trade_events(t: float, bought, sold, levels, k: float) -> list[TradeEvent]:
    """Ledger entries for one path's trades at a single tick."""
    events = []
    for i in range(len(levels)):
        if sold[i] > 0:
            events.append(TradeEvent(t, i, "sell", float(sold[i]), k * float(sold[i]), float(levels[i])))
        if bought[i] > 0:
            events.append(TradeEvent(t, i, "buy", float(bought[i]), k * float(bought[i]), float(levels[i])))
    return events


def rebalance(state: PortfolioState, policy: BandPolicy) -> tuple[PortfolioState, list[TradeEvent]]:
    """Trade every out-of-band holding to its nearest band edge.

    Curve and widths are evaluated once at the pre-trade wealth and held
    fixed for the whole rebalance.

    Raises
    ------
    NonPositiveWealth
        If wealth after costs is ``<= 0``.
    """
    lower, upper = policy.bounds(state.wealth, state.t)
    bond, holdings, bought, sold = apply_trades(state.bond, state.holdings, lower, upper, policy.k)
    new = PortfolioState(t=state.t, bond=float(bond), holdings=holdings, step=state.step)
    if not new.wealth > 0:
        raise NonPositiveWealth(new.wealth, new.t)
    return new, trade_events(state.t, bought, sold, holdings, policy.k)
