"""Monte Carlo ensembles of trading paths.

Seeding
-------
Path ``i`` of an ensemble with base seed ``s`` draws its noise from
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(i,))))``, one
``standard_normal((chunk, n))`` call per block of ticks, then correlates the
draws with the Cholesky factor of ``rho``. Every path therefore sees the same
noise whichever ensemble, block or worker process it runs in, and two
strategies run with the same base seed are compared on common random numbers.

Within a tick the order is: trade against the bands at the current wealth,
then diffuse one Euler step.
"""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .mat import correlated_normals
from .model import MarketParams, diffuse, total_wealth
from .strategy import (
    BandPolicy,
    LtgmModel,
    TradeEvent,
    UtilityModel,
    apply_trades,
    frictionless_policy,
    naive_policy,
    trade_events,
)

log = logging.getLogger(__name__)

DEFAULT_SEED = 20070101
DEFAULT_RECORD_POINTS = 200
BLOCK_SIZE = 500
NOISE_CHUNK = 1024


class ConfigError(ValueError):
    """Invalid run configuration."""


class GridMismatch(ValueError):
    """Summaries recorded on different grids or path counts cannot be compared."""


class StrategyKind(enum.Enum):
    FRICTIONLESS = "frictionless"
    BANDED = "banded"
    BANDED_CUSTOM = "banded_custom"
    NAIVE = "naive"
    BUY_AND_HOLD = "buy_and_hold"


@dataclass(frozen=True, eq=False)
class StrategySpec:
    """How a path trades.

    ``weights`` replaces the utility's optimal curve by ``pi * weights`` (and
    sets the initial allocation); ``width_coefficients`` is required for
    ``BANDED_CUSTOM`` and gives ``alpha / (k^(1/3) pi)`` per asset.
    """

    kind: StrategyKind
    weights: tuple[float, ...] | None = None
    width_coefficients: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.width_coefficients is not None:
            coef = tuple(float(c) for c in self.width_coefficients)
            if any(not c >= 0 for c in coef):
                raise ConfigError("width coefficients must be nonnegative")
            object.__setattr__(self, "width_coefficients", coef)
        custom = self.kind is StrategyKind.BANDED_CUSTOM
        if custom and self.width_coefficients is None:
            raise ConfigError("banded_custom needs width coefficients")
        if not custom and self.width_coefficients is not None:
            raise ConfigError(f"width coefficients are only used by banded_custom, not {self.kind.value}")

    def policy(self, params: MarketParams, utility: UtilityModel | None) -> BandPolicy | None:
        w = None if self.weights is None else np.array(self.weights)
        if self.kind is StrategyKind.FRICTIONLESS:
            return frictionless_policy(utility, weights=w)
        if self.kind is StrategyKind.BANDED:
            return BandPolicy(utility, params.k, weights=w)
        if self.kind is StrategyKind.BANDED_CUSTOM:
            return BandPolicy(utility, params.k, weights=w, width_coefficients=np.array(self.width_coefficients))
        if self.kind is StrategyKind.NAIVE:
            return naive_policy(utility, params.k, weights=w)
        return None

    def needs_utility(self) -> bool:
        """Whether the curve or the widths come from a utility model."""
        return self.weights is None or self.kind is StrategyKind.BANDED

    def initial_weights(self, params: MarketParams, utility: UtilityModel | None) -> NDArray:
        if self.weights is not None:
            if len(self.weights) != params.n:
                raise ConfigError(f"{len(self.weights)} weights given for {params.n} assets")
            return np.array(self.weights)
        return utility.optimal_curve(1.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "weights": None if self.weights is None else list(self.weights),
            "width_coefficients": None if self.width_coefficients is None else list(self.width_coefficients),
        }


@dataclass(eq=False)
class PathResult:
    times: NDArray
    log_wealth: NDArray
    trades: list[TradeEvent]
    status: str
    bankrupt_time: float | None
    terminal_wealth: float
    dynamics_gain: float
    total_traded: float
    total_cost: float
    #: post-trade state at each tick plus the terminal state, when requested
    series: dict[str, NDArray] | None = None


@dataclass(eq=False)
class EnsembleSummary:
    """Per-time mean and SEM of log wealth over the completed paths.

    ``samples`` keeps every path's recorded log wealth (NaN rows for aborted
    paths) so that two ensembles on the same seed can be paired.
    """

    times: NDArray
    mean_log_wealth: NDArray
    sem: NDArray
    n_paths: int
    n_aborted: int
    base_seed: int
    samples: NDArray = field(repr=False)
    completed: NDArray = field(repr=False)
    terminal_wealth: NDArray = field(repr=False)
    dynamics_gain: NDArray = field(repr=False)
    total_traded: NDArray = field(repr=False)
    total_cost: NDArray = field(repr=False)


@dataclass(eq=False)
class Difference:
    times: NDArray
    difference: NDArray
    sem: NDArray
    n_paths: int
    paired: bool


def path_generator(base_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(base_seed, spawn_key=(index,))))


def record_steps(n_steps: int, points: int) -> NDArray:
    """Step indices of ``points`` evenly spaced recording times in ``(0, T]``."""
    if points < 1:
        raise ConfigError("need at least one recording point")
    j = np.arange(1, points + 1)
    return np.unique(np.rint(j * n_steps / points).astype(np.int64).clip(1, n_steps))


def _simulate(params, strategy, utility, base_seed, indices, steps, record_trades=False, record_series=False):
    n, n_steps, dt = params.n, params.n_steps, params.dt
    n_paths = len(indices)
    policy = strategy.policy(params, utility)
    w0 = strategy.initial_weights(params, utility)

    hold = np.tile(w0, (n_paths, 1))
    bond = 1.0 - total_wealth(np.zeros(n_paths), hold)
    alive = np.ones(n_paths, dtype=bool)
    bankrupt_step = np.full(n_paths, -1)
    dyn = np.zeros(n_paths)
    traded = np.zeros(n_paths)
    cost = np.zeros(n_paths)
    col = np.full(n_steps + 1, -1)
    col[steps] = np.arange(len(steps))
    log_w = np.full((n_paths, len(steps)), np.nan)
    ledgers = [[] for _ in range(n_paths)]
    series = None
    if record_series:
        series = {"bond": np.empty((n_paths, n_steps + 1)), "holdings": np.empty((n_paths, n_steps + 1, n))}

    gens = [path_generator(base_seed, int(i)) for i in indices]
    chol = params.rho_factor
    mu, sigma, r = params.mu, params.sigma, params.r
    noise = None

    def kill(mask, step):
        nonlocal bond, hold
        mask = mask & alive
        if mask.any():
            alive[mask] = False
            bankrupt_step[mask] = step
            bond = np.where(mask, 1.0, bond)
            hold = np.where(mask[:, None], 0.0, hold)

    for step in range(n_steps):
        if step % NOISE_CHUNK == 0:
            c = min(NOISE_CHUNK, n_steps - step)
            noise = correlated_normals(chol, np.stack([g.standard_normal((c, n)) for g in gens], axis=1))
        t = step * dt
        if policy is not None:
            pi = total_wealth(bond, hold)
            lower, upper = policy.bounds(pi, t)
            bond, hold, bought, sold = apply_trades(bond, hold, lower, upper, policy.k)
            amount = np.zeros(n_paths)
            for i in range(n):
                amount = amount + bought[:, i] + sold[:, i]
            traded += amount
            cost += policy.k * amount
            if record_trades:
                for p in np.flatnonzero(amount > 0):
                    if alive[p]:
                        ledgers[p].extend(trade_events(t, bought[p], sold[p], hold[p], policy.k))
            kill(~(total_wealth(bond, hold) > 0), step)
        if record_series:
            series["bond"][:, step] = bond
            series["holdings"][:, step] = hold
        bond, hold, gain = diffuse(bond, hold, mu, sigma, r, dt, noise[step % NOISE_CHUNK])
        dyn += gain
        pi = total_wealth(bond, hold)
        kill(~(pi > 0), step + 1)
        j = col[step + 1]
        if j >= 0:
            log_w[:, j] = np.where(alive, np.log(np.where(alive, pi, 1.0)), np.nan)
    if record_series:
        series["bond"][:, n_steps] = bond
        series["holdings"][:, n_steps] = hold

    terminal = np.where(alive, total_wealth(bond, hold), np.nan)
    return {
        "log_wealth": log_w,
        "alive": alive,
        "bankrupt_step": bankrupt_step,
        "terminal": terminal,
        "dyn": np.where(alive, dyn, np.nan),
        "traded": np.where(alive, traded, np.nan),
        "cost": np.where(alive, cost, np.nan),
        "ledgers": ledgers,
        "series": series,
    }


def _default_utility(params, strategy, utility):
    if utility is None and strategy.needs_utility():
        return LtgmModel(params)
    return utility


def run_path(
    params: MarketParams,
    strategy: StrategySpec,
    utility: UtilityModel | None = None,
    base_seed: int = DEFAULT_SEED,
    path_index: int = 0,
    record_points: int = DEFAULT_RECORD_POINTS,
    record_series: bool = False,
) -> PathResult:
    """Simulate one path from unit wealth on the initial curve.

    The path draws exactly the noise it would draw as member ``path_index`` of
    :func:`run_ensemble` with the same base seed. Bankruptcy is reported in
    ``status``, never raised.
    """
    utility = _default_utility(params, strategy, utility)
    steps = record_steps(params.n_steps, record_points)
    out = _simulate(params, strategy, utility, base_seed, [path_index], steps, True, record_series)
    alive = bool(out["alive"][0])
    series = None
    if record_series:
        series = {
            "t": np.arange(params.n_steps + 1) * params.dt,
            "bond": out["series"]["bond"][0],
            "holdings": out["series"]["holdings"][0],
        }
    return PathResult(
        times=steps * params.dt,
        log_wealth=out["log_wealth"][0],
        trades=out["ledgers"][0],
        status="completed" if alive else "bankrupt",
        bankrupt_time=None if alive else float(out["bankrupt_step"][0] * params.dt),
        terminal_wealth=float(out["terminal"][0]),
        dynamics_gain=float(out["dyn"][0]),
        total_traded=float(out["traded"][0]),
        total_cost=float(out["cost"][0]),
        series=series,
    )


def _run_block(args):
    params, strategy, utility, base_seed, start, stop, steps = args
    out = _simulate(params, strategy, utility, base_seed, range(start, stop), steps)
    return {key: out[key] for key in ("log_wealth", "alive", "terminal", "dyn", "traded", "cost")}


def run_ensemble(
    params: MarketParams,
    strategy: StrategySpec,
    utility: UtilityModel | None = None,
    base_seed: int = DEFAULT_SEED,
    paths: int = 4000,
    record_points: int = DEFAULT_RECORD_POINTS,
    workers: int = 1,
) -> EnsembleSummary:
    """Run ``paths`` independent paths and aggregate log wealth on the recording grid.

    Paths are simulated in fixed blocks of :data:`BLOCK_SIZE`, optionally in
    ``workers`` processes; the result does not depend on ``workers``.
    """
    if paths < 2:
        raise ConfigError(f"need at least 2 paths for a standard error, got {paths}")
    utility = _default_utility(params, strategy, utility)
    steps = record_steps(params.n_steps, record_points)
    jobs = [
        (params, strategy, utility, base_seed, start, min(start + BLOCK_SIZE, paths), steps)
        for start in range(0, paths, BLOCK_SIZE)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_run_block, jobs))
    else:
        blocks = [_run_block(job) for job in jobs]

    cat = {key: np.concatenate([b[key] for b in blocks]) for key in blocks[0]}
    completed = cat["alive"]
    n_ok = int(completed.sum())
    n_aborted = paths - n_ok
    if n_aborted:
        log.warning("%d of %d paths went bankrupt and are excluded from the averages", n_aborted, paths)
    good = cat["log_wealth"][completed]
    mean = good.mean(axis=0) if n_ok else np.full(len(steps), np.nan)
    sem = good.std(axis=0, ddof=1) / math.sqrt(n_ok) if n_ok >= 2 else np.full(len(steps), np.nan)
    return EnsembleSummary(
        times=steps * params.dt,
        mean_log_wealth=mean,
        sem=sem,
        n_paths=n_ok,
        n_aborted=n_aborted,
        base_seed=base_seed,
        samples=cat["log_wealth"],
        completed=completed,
        terminal_wealth=cat["terminal"],
        dynamics_gain=cat["dyn"],
        total_traded=cat["traded"],
        total_cost=cat["cost"],
    )


def compare(a: EnsembleSummary, b: EnsembleSummary) -> Difference:
    """Per-time ``mean_a - mean_b`` with its standard error.

    Ensembles on the same base seed share their noise path by path, so the
    difference is taken per path and its own SEM reported (paired).
    Otherwise the SEMs are combined in quadrature.
    """
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise GridMismatch("recording grids differ")
    if len(a.completed) != len(b.completed):
        raise GridMismatch(f"path counts differ: {len(a.completed)} vs {len(b.completed)}")
    if a.base_seed == b.base_seed:
        both = a.completed & b.completed
        diff = a.samples[both] - b.samples[both]
        m = int(both.sum())
        sem = diff.std(axis=0, ddof=1) / math.sqrt(m) if m >= 2 else np.full(len(a.times), np.nan)
        return Difference(a.times, diff.mean(axis=0), sem, m, True)
    return Difference(
        a.times,
        a.mean_log_wealth - b.mean_log_wealth,
        np.sqrt(a.sem ** 2 + b.sem ** 2),
        min(a.n_paths, b.n_paths),
        False,
    )
