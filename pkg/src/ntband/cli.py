"""Command-line front end.

Exit codes: 0 success, 2 invalid configuration or mismatched comparison,
3 covariance/correlation not positive definite, 4 I/O failure, 5 some paths
went bankrupt (outputs are still written).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__
from . import config as cfgmod
from . import report
from .ensemble import ConfigError, GridMismatch, compare, run_ensemble, run_path
from .mat import NotPositiveDefinite
from .model import two_asset_market
from .strategy import LtgmModel, band_coefficients, uncorrelated_band_coefficients

EXIT_OK, EXIT_CONFIG, EXIT_NOT_PD, EXIT_IO, EXIT_BANKRUPT = 0, 2, 3, 4, 5

log = logging.getLogger("ntband")


def default_config() -> cfgmod.RunConfig:
    return cfgmod.RunConfig(market=two_asset_market(), strategy=cfgmod.StrategySpec("banded"))


def _vec(v) -> str:
    return "(" + ", ".join(f"{x:.4f}" for x in v) + ")"


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *args):
        if not self.quiet:
            print(*args)


def _resolve(args) -> list[cfgmod.RunConfig]:
    configs = [c for path in (args.config or []) for c in cfgmod.load(path)] or [default_config()]
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.paths is not None:
        overrides["paths"] = args.paths
    if args.workers is not None:
        overrides["workers"] = args.workers
    configs = [dataclasses.replace(c, **overrides) for c in configs]
    for c in configs:
        cfgmod.check(c)
    return configs


def _out_dir(args, cfg) -> Path:
    return Path(args.out if args.out is not None else cfg.out)


def cmd_weights(args, say) -> int:
    (cfg,) = _single(_resolve(args), "weights")
    params = cfg.market
    model = LtgmModel(params)
    coef = band_coefficients(params)
    unc = uncorrelated_band_coefficients(params)
    table = report.band_table(params, params.k)  # compute before writing anything
    say(f"weights p          = {_vec(model.weights)}")
    say(f"bond weight q      = {model.bond_weight:.4f}")
    say(f"growth rate g      = {model.growth:.4f}")
    say(f"alpha/(k^1/3 Pi)   = {_vec(coef)}")
    say(f"  rho ignored      = {_vec(unc)}")
    say(f"alpha at Pi=1, k={params.k:g} = {_vec(coef * params.k ** (1 / 3))}")
    if any(e["paper_reported"] for e in table["assets"]):
        rep = [e["paper_reported"]["alpha_over_k13_pi"] for e in table["assets"]]
        say(f"  printed values   = {_vec(rep)} (differ from the formula; see README)")
    out = _out_dir(args, cfg)
    report.write_band_table(params, params.k, out / "band_table.json")
    report.write_manifest(out / "weights.manifest.json", "weights", [cfg.to_dict()], ["band_table.json"])
    return EXIT_OK


def _single(configs, command):
    if len(configs) != 1:
        raise ConfigError(f"{command} takes exactly one config, got {len(configs)}")
    return configs


def cmd_simulate(args, say) -> int:
    (cfg,) = _single(_resolve(args), "simulate")
    summary = run_ensemble(
        cfg.market, cfg.strategy, base_seed=cfg.seed, paths=cfg.paths,
        record_points=cfg.record_points, workers=cfg.workers,
    )
    out = _out_dir(args, cfg)
    report.write_summary_csv(summary, out / "summary.csv")
    report.write_manifest(out / "simulate.manifest.json", "simulate", [cfg.to_dict()], ["summary.csv"])
    say(
        f"{cfg.strategy.kind.value}: mean log wealth at T={cfg.market.T:g} is "
        f"{summary.mean_log_wealth[-1]:.6f} +/- {summary.sem[-1]:.6f} ({summary.n_paths} paths)"
    )
    if summary.n_aborted:
        print(f"WARNING: {summary.n_aborted} of {cfg.paths} paths went bankrupt", file=sys.stderr)
        return EXIT_BANKRUPT
    return EXIT_OK


def cmd_compare(args, say) -> int:
    configs = _resolve(args)
    if len(configs) != 2:
        raise ConfigError(f"compare needs two configs, got {len(configs)}")
    a, b = configs
    for name in ("paths", "seed", "record_points"):
        if getattr(a, name) != getattr(b, name):
            raise GridMismatch(f"configs differ in {name}: {getattr(a, name)} vs {getattr(b, name)}")
    if (a.market.T, a.market.dt) != (b.market.T, b.market.dt):
        raise GridMismatch("configs differ in T or dt")
    sa, sb = (
        run_ensemble(c.market, c.strategy, base_seed=c.seed, paths=c.paths,
                     record_points=c.record_points, workers=c.workers)
        for c in (a, b)
    )
    diff = compare(sa, sb)
    out = _out_dir(args, a)
    report.write_summary_csv(sa, out / "summary_a.csv")
    report.write_summary_csv(sb, out / "summary_b.csv")
    report.write_difference_csv(diff, out / "difference.csv")
    report.write_manifest(
        out / "compare.manifest.json", "compare", [a.to_dict(), b.to_dict()],
        ["summary_a.csv", "summary_b.csv", "difference.csv"],
    )
    kind = "paired" if diff.paired else "unpaired"
    say(f"difference at T: {diff.difference[-1]:.6f} +/- {diff.sem[-1]:.6f} ({kind}, {diff.n_paths} paths)")
    if sa.n_aborted or sb.n_aborted:
        print(f"WARNING: bankrupt paths: {sa.n_aborted} and {sb.n_aborted}", file=sys.stderr)
        return EXIT_BANKRUPT
    return EXIT_OK


def cmd_trades(args, say) -> int:
    (cfg,) = _single(_resolve(args), "trades")
    result = run_path(cfg.market, cfg.strategy, base_seed=cfg.seed, path_index=cfg.path_index,
                      record_points=cfg.record_points, record_series=True)
    out = _out_dir(args, cfg)
    report.write_trades_csv(result, out / "trades.csv")
    report.write_series_csv(result, out / "series.csv")
    report.write_manifest(out / "trades.manifest.json", "trades", [cfg.to_dict()], ["trades.csv", "series.csv"])
    buys = sum(e.side == "buy" for e in result.trades)
    say(f"{len(result.trades)} trades ({buys} buys, {len(result.trades) - buys} sells), "
        f"cost {result.total_cost:.6g}, terminal wealth {result.terminal_wealth:.6g}")
    if result.status != "completed":
        print(f"WARNING: path went bankrupt at t={result.bankrupt_time}", file=sys.stderr)
        return EXIT_BANKRUPT
    return EXIT_OK


COMMANDS = {"weights": cmd_weights, "simulate": cmd_simulate, "compare": cmd_compare, "trades": cmd_trades}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", metavar="PATH",
                        help="TOML config or JSON manifest (give twice for compare)")
    common.add_argument("--out", metavar="DIR", help="output directory (default: [run] out, else ./out)")
    common.add_argument("--seed", type=int, metavar="U64", help="base seed override")
    common.add_argument("--paths", type=int, metavar="S", help="path count override")
    common.add_argument("--workers", type=int, metavar="N", help="worker processes (results do not depend on it)")
    common.add_argument("--quiet", action="store_true", help="suppress stdout summary")

    parser = argparse.ArgumentParser(prog="ntband", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("weights", parents=[common], help="optimal weights, growth rate and band widths")
    sub.add_parser("simulate", parents=[common], help="ensemble mean log wealth with standard errors")
    sub.add_parser("compare", parents=[common], help="paired difference of two configured ensembles")
    sub.add_parser("trades", parents=[common], help="trade ledger and holdings of one seeded path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    say = _Out(args.quiet)
    try:
        return COMMANDS[args.command](args, say)
    except NotPositiveDefinite as exc:
        print(f"error: not positive definite: {exc}", file=sys.stderr)
        return EXIT_NOT_PD
    except (ConfigError, GridMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
