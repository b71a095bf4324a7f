"""Run configuration files.

A config is a TOML document with the sections below; unknown sections or
keys are rejected.

    [market]            r, mu, sigma, rho (required); k, T, dt (optional)
    [run]               strategy, paths, seed, record_points, workers,
                        path_index, out (all optional)
    [weights]           values = [..] | "uncorrelated"
    [widths]            coefficients = [..] | "uncorrelated"   (banded_custom only)

``rho`` is either full rows (checked for symmetry) or the upper triangle,
diagonal included, as rows of decreasing length. A JSON run manifest is
accepted in place of a TOML file; its ``configs`` entries use the same schema.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import DEFAULT_RECORD_POINTS, DEFAULT_SEED, ConfigError, StrategyKind, StrategySpec
from .mat import NotPositiveDefinite
from .model import MarketParams
from .strategy import uncorrelated_band_coefficients, uncorrelated_weights

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA = {
    "market": {"r", "mu", "sigma", "rho", "k", "T", "dt"},
    "run": {"strategy", "paths", "seed", "record_points", "workers", "path_index", "out"},
    "weights": {"values"},
    "widths": {"coefficients"},
}
REQUIRED_MARKET = ("r", "mu", "sigma", "rho")


@dataclass(frozen=True, eq=False)
class RunConfig:
    market: MarketParams
    strategy: StrategySpec
    paths: int = 4000
    seed: int = DEFAULT_SEED
    record_points: int = DEFAULT_RECORD_POINTS
    workers: int = 1
    path_index: int = 0
    out: str = "out"

    def to_dict(self) -> dict:
        """Fully resolved config in file schema (derived weights/widths spelled out)."""
        d = {
            "market": self.market.to_dict(),
            "run": {
                "strategy": self.strategy.kind.value,
                "paths": self.paths,
                "seed": self.seed,
                "record_points": self.record_points,
                "workers": self.workers,
                "path_index": self.path_index,
            },
        }
        if self.strategy.weights is not None:
            d["weights"] = {"values": list(self.strategy.weights)}
        if self.strategy.width_coefficients is not None:
            d["widths"] = {"coefficients": list(self.strategy.width_coefficients)}
        return d


def parse_rho(rows, n: int) -> np.ndarray:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ConfigError("rho must be a list of rows")
    lengths = [len(r) for r in rows]
    if lengths == [n] * n:
        return np.array(rows, dtype=float)
    if lengths == list(range(n, 0, -1)):
        rho = np.eye(n)
        for i, row in enumerate(rows):
            rho[i, i:] = row
            rho[i:, i] = row
        return rho
    raise ConfigError(f"rho rows have lengths {lengths}; expected {n} full rows or an upper triangle")


def _number(value, name, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _vector(value, name, n=None):
    if not isinstance(value, list):
        raise ConfigError(f"{name} must be a list of numbers")
    v = [_number(x, f"{name}[{i}]") for i, x in enumerate(value)]
    if n is not None and len(v) != n:
        raise ConfigError(f"{name} has {len(v)} entries, expected {n}")
    return v


def from_dict(doc: dict) -> RunConfig:
    """Validate a config mapping and build a :class:`RunConfig`."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(body) - SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    m = doc.get("market")
    if m is None:
        raise ConfigError("missing [market] section")
    missing = [key for key in REQUIRED_MARKET if key not in m]
    if missing:
        raise ConfigError(f"[market] is missing {', '.join(missing)}")
    mu = _vector(m["mu"], "mu")
    n = len(mu)
    if n == 0:
        raise ConfigError("need at least one risky asset")
    try:
        market = MarketParams(
            r=_number(m["r"], "r"),
            mu=mu,
            sigma=_vector(m["sigma"], "sigma", n),
            rho=parse_rho(m["rho"], n),
            k=_number(m.get("k", 0.0), "k"),
            T=_number(m.get("T", 1.0), "T"),
            dt=_number(m.get("dt", 1e-3), "dt"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    run = doc.get("run", {})
    kind_name = run.get("strategy", "banded")
    try:
        kind = StrategyKind(kind_name)
    except ValueError:
        choices = ", ".join(k.value for k in StrategyKind)
        raise ConfigError(f"unknown strategy {kind_name!r}; choose one of {choices}") from None

    weights = None
    if "weights" in doc:
        values = doc["weights"].get("values")
        if values == "uncorrelated":
            weights = tuple(_resolve(uncorrelated_weights, market))
        else:
            weights = tuple(_vector(values, "weights.values", n))
    coefficients = None
    if "widths" in doc:
        values = doc["widths"].get("coefficients")
        if values == "uncorrelated":
            coefficients = tuple(_resolve(uncorrelated_band_coefficients, market))
        else:
            coefficients = tuple(_vector(values, "widths.coefficients", n))
    strategy = StrategySpec(kind, weights=weights, width_coefficients=coefficients)

    cfg = RunConfig(
        market=market,
        strategy=strategy,
        paths=_number(run.get("paths", 4000), "paths", int),
        seed=_number(run.get("seed", DEFAULT_SEED), "seed", int),
        record_points=_number(run.get("record_points", DEFAULT_RECORD_POINTS), "record_points", int),
        workers=_number(run.get("workers", 1), "workers", int),
        path_index=_number(run.get("path_index", 0), "path_index", int),
        out=str(run.get("out", "out")),
    )
    check(cfg)
    return cfg


def _resolve(fn, market):
    # the uncorrelated variants need only positive volatilities, not a valid rho factor
    try:
        return fn(market)
    except NotPositiveDefinite:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def check(cfg: RunConfig) -> None:
    if cfg.paths < 2:
        raise ConfigError(f"paths must be at least 2, got {cfg.paths}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.record_points < 1:
        raise ConfigError("record_points must be positive")
    if cfg.workers < 1:
        raise ConfigError("workers must be positive")
    if cfg.path_index < 0:
        raise ConfigError("path_index must be nonnegative")


def load(path) -> list[RunConfig]:
    """Read a TOML config (one run) or a JSON manifest (one run per entry)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            docs = json.loads(raw)["configs"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path} is not a run manifest") from exc
        return [from_dict(d) for d in docs]
    try:
        doc = tomllib.loads(raw.decode())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return [from_dict(doc)]
