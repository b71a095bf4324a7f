"""CSV/JSON writers for summaries, comparisons, trade ledgers and band tables.

Numbers are written with 12 significant digits. Files are written to a
temporary sibling and renamed into place, so a failed run leaves no partial
file behind.
"""
from __future__ import annotations

import datetime as _dt
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import Difference, EnsembleSummary, PathResult
from .model import MarketParams
from .strategy import (
    LtgmModel,
    band_coefficients,
    uncorrelated_band_coefficients,
)

SUMMARY_HEADER = ("t", "mean_log_wealth", "sem", "n_paths")
DIFFERENCE_HEADER = ("t", "difference", "sem", "n_paths")
TRADES_HEADER = ("t", "asset", "side", "amount", "cost")

# values printed for the two-asset reference market (r=1, mu=(1.3, 1.5),
# sigma=(1, 1), rho_12=0.5); kept for comparison, not used in any computation
PAPER_REPORTED = {
    "market": {"r": 1.0, "mu": [1.3, 1.5], "sigma": [1.0, 1.0], "rho": [[1.0, 0.5], [0.5, 1.0]]},
    "weight": [0.067, 0.467],
    "alpha_over_k13_pi": [0.167, 0.710],
    "alpha_uncorrelated": [0.508, 0.760],
}


def fmt(x) -> str:
    return format(float(x), ".12g")


def _round12(x: float) -> float:
    return float(fmt(x))


def atomic_write_text(destination, text: str) -> Path:
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=destination.parent, prefix=f".{destination.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, destination)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return destination


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def write_summary_csv(summary: EnsembleSummary, destination) -> Path:
    rows = (
        (fmt(t), fmt(m), fmt(s), str(summary.n_paths))
        for t, m, s in zip(summary.times, summary.mean_log_wealth, summary.sem)
    )
    return atomic_write_text(destination, _csv(SUMMARY_HEADER, rows))


def write_difference_csv(diff: Difference, destination) -> Path:
    rows = ((fmt(t), fmt(d), fmt(s), str(diff.n_paths)) for t, d, s in zip(diff.times, diff.difference, diff.sem))
    return atomic_write_text(destination, _csv(DIFFERENCE_HEADER, rows))


def write_trades_csv(result: PathResult, destination) -> Path:
    """One row per trade, assets numbered from 1, ``side`` in {buy, sell}."""
    rows = (
        (fmt(e.t), str(e.asset + 1), e.side, fmt(e.amount), fmt(e.cost))
        for e in sorted(result.trades, key=lambda e: (e.t, e.asset))
    )
    return atomic_write_text(destination, _csv(TRADES_HEADER, rows))


def write_series_csv(result: PathResult, destination) -> Path:
    """Post-trade bond and holdings at every tick, plus the terminal state."""
    if result.series is None:
        raise ValueError("path was run without record_series")
    s = result.series
    n = s["holdings"].shape[1]
    header = ("t", "bond", *(f"A{i + 1}" for i in range(n)), "wealth")
    wealth = s["bond"] + s["holdings"].sum(axis=1)
    rows = (
        (fmt(t), fmt(b), *(fmt(a) for a in h), fmt(w))
        for t, b, h, w in zip(s["t"], s["bond"], s["holdings"], wealth)
    )
    return atomic_write_text(destination, _csv(header, rows))


def _is_reference_market(params: MarketParams) -> bool:
    ref = PAPER_REPORTED["market"]
    return (
        params.n == 2
        and params.r == ref["r"]
        and np.array_equal(params.mu, ref["mu"])
        and np.array_equal(params.sigma, ref["sigma"])
        and np.array_equal(params.rho, ref["rho"])
    )


def band_table(params: MarketParams, k: float) -> dict:
    """Weights and band widths per asset, with the printed reference values when applicable.

    ``alpha_over_k13_pi`` does not depend on ``k``; ``alpha`` is the actual
    half-width at unit wealth for the given ``k``.
    """
    model = LtgmModel(params)
    coef = band_coefficients(params)
    unc = uncorrelated_band_coefficients(params)
    reference = _is_reference_market(params)
    assets = []
    for i in range(params.n):
        entry = {
            "asset": i + 1,
            "weight": _round12(model.weights[i]),
            "alpha_over_k13_pi": _round12(coef[i]),
            "alpha": _round12(coef[i] * np.cbrt(k)),
            "alpha_uncorrelated": _round12(unc[i]),
            "paper_reported": None,
        }
        if reference:
            entry["paper_reported"] = {
                key: PAPER_REPORTED[key][i] for key in ("weight", "alpha_over_k13_pi", "alpha_uncorrelated")
            }
        assets.append(entry)
    return {
        "k": k,
        "bond_weight": _round12(model.bond_weight),
        "growth_rate": _round12(model.growth),
        "assets": assets,
    }


def write_band_table(params: MarketParams, k: float, destination) -> Path:
    return atomic_write_text(destination, json.dumps(band_table(params, k), indent=2, sort_keys=True) + "\n")


def manifest(command: str, configs: list[dict], outputs: list[str]) -> dict:
    return {
        "command": command,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "configs": configs,
        "outputs": sorted(outputs),
    }


def write_manifest(destination, command: str, configs: list[dict], outputs: list[str]) -> Path:
    text = json.dumps(manifest(command, configs, outputs), indent=2, sort_keys=True) + "\n"
    return atomic_write_text(destination, text)
