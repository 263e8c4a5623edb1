"""
Command-Line Interface for skyheight
Subcommands: topology, run, sweep, replay, gradcheck, report
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .. import __version__
from ..learning.neural import gradient_check
from ..utils import ConfigError, SimUtils
from ..world.topology import CityGenerator
from .config import POLICIES, ExperimentConfig
from .harness import ExperimentHarness

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

GRADCHECK_TOLERANCE = 1e-4

console = Console(soft_wrap=True)
err_console = Console(stderr=True, soft_wrap=True, highlight=False)


class UsageError(Exception):
    """Bad command line"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--log-file", help="also log to this file")

    cell = _Parser(add_help=False)
    cell.add_argument("--bs-density", type=float, help="BSs per km^2")
    cell.add_argument("--build-density", type=float, help="buildings per km^2")

    runs = _Parser(add_help=False)
    runs.add_argument("--episodes", type=int, help="episodes per cell")
    runs.add_argument("--window", type=int, nargs=2, metavar=("START", "END"),
                      help="summary window (inclusive episodes)")
    runs.add_argument("--jobs", type=int, help="worker processes")

    parser = _Parser(prog="skyheight", description="UAV height control simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("topology", parents=[common, cell], help="generate and export a city")

    run = sub.add_parser("run", parents=[common, cell, runs], help="run a single cell")
    run.add_argument("--policy", choices=POLICIES, default="dqn")
    run.add_argument("--variant", default=None, help="state variant for dqn")
    run.add_argument("--replicate", type=int, default=0)

    sweep = sub.add_parser("sweep", parents=[common, runs], help="run the full density sweep")
    sweep.add_argument("--policy", action="append", choices=POLICIES,
                       help="restrict to these policies (repeatable)")
    sweep.add_argument("--variant", action="append", help="restrict DQN variants (repeatable)")

    sub.add_parser("replay", parents=[common], help="recompute logged spectral efficiencies")

    grad = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    grad.add_argument("--instances", type=int, default=10)

    sub.add_parser("report", parents=[common], help="render summary and comparison tables")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults < JSON < environment < command line"""
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    if getattr(args, "episodes", None) is not None:
        config.episodes = args.episodes
    if getattr(args, "window", None) is not None:
        config.summary_window = tuple(args.window)
    if getattr(args, "jobs", None) is not None:
        config.jobs = args.jobs
    if args.command == "sweep":
        if args.policy:
            config.policies = list(dict.fromkeys(args.policy))
        if args.variant:
            config.variants = list(dict.fromkeys(args.variant))
    config.validate()
    return config


def render_summary(frame: pd.DataFrame, title: str) -> None:
    table = Table(title=title)
    for column in ("cell_id", "mean_throughput_bits_hz", "sd_throughput_bits_hz", "mean_height_m"):
        table.add_column(column, justify="left" if column == "cell_id" else "right")
    for row in frame.itertuples(index=False):
        table.add_row(row.cell_id, f"{row.mean_throughput_bits_hz:.2f}",
                      f"{row.sd_throughput_bits_hz:.2f}", f"{row.mean_height_m:.1f}")
    console.print(table)


def render_comparison(frame: pd.DataFrame) -> None:
    table = Table(title="Comparison")
    for column in ("bs", "build", "policy", "variant", "mean", "sd", "height",
                   "vs constant %", "vs genie %"):
        table.add_column(column, justify="right")
    for row in frame.itertuples(index=False):
        table.add_row(
            f"{row.bs_density:g}", f"{row.build_density:g}", row.policy, row.variant,
            f"{row.mean_throughput_bits_hz:.2f}", f"{row.sd_throughput_bits_hz:.2f}",
            f"{row.mean_height_m:.1f}", f"{row.improvement_vs_constant_pct:+.1f}",
            f"{row.improvement_vs_genie_pct:+.1f}",
        )
    console.print(table)


def cmd_topology(args, config: ExperimentConfig) -> int:
    bs = args.bs_density if args.bs_density is not None else config.bs_median_km2
    build = args.build_density if args.build_density is not None else config.build_median_km2
    topology = CityGenerator.generate(bs, build, config.master_seed, config.topology)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "topology.json"
    topology.to_json(path)
    console.print(f"{topology.n_bss} base stations, {topology.buildings.count} buildings "
                  f"(pitch {topology.buildings.pitch_m:.3f} m) -> {path}")
    return EXIT_OK


def cmd_run(args, config: ExperimentConfig) -> int:
    harness = ExperimentHarness(config)
    cell = harness.make_cell(
        args.bs_density if args.bs_density is not None else config.bs_median_km2,
        args.build_density if args.build_density is not None else config.build_median_km2,
        args.policy, args.variant, args.replicate,
    )
    summary, results = harness.execute([cell], config.out_dir, jobs=1)
    if not results[0].ok:
        err_console.print(f"error: {results[0].error}", markup=False)
        return EXIT_RUNTIME
    render_summary(summary, f"Cell {cell.cell_id}")
    return EXIT_OK


def cmd_sweep(args, config: ExperimentConfig) -> int:
    harness = ExperimentHarness(config)
    summary, results = harness.execute(harness.cells(), config.out_dir)
    failed = [r.cell.cell_id for r in results if not r.ok]
    render_summary(summary, "Sweep summary")
    if failed:
        err_console.print(f"error: {len(failed)} cell(s) failed: {', '.join(failed)}", markup=False)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_replay(args, config: ExperimentConfig) -> int:
    rows = ExperimentHarness.replay(config.out_dir)
    console.print(f"replay ok: {rows} step rows reproduced")
    return EXIT_OK


def cmd_gradcheck(args, config: ExperimentConfig) -> int:
    if args.instances < 1:
        raise UsageError(f"--instances must be >= 1, got {args.instances}")
    result = gradient_check(SimUtils.substream(config.master_seed, "gradcheck"),
                            n_instances=args.instances)
    console.print(f"max relative error {result['max_rel_error']:.3e} over "
                  f"{int(result['checked'])} coordinates ({int(result['skipped'])} skipped at kinks)")
    if not np.isfinite(result["max_rel_error"]) or result["max_rel_error"] > GRADCHECK_TOLERANCE:
        err_console.print(f"error: gradient check failed (tolerance {GRADCHECK_TOLERANCE:g})")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_report(args, config: ExperimentConfig) -> int:
    out = Path(config.out_dir)
    summary = pd.read_csv(out / "summary.csv", float_precision="round_trip")
    render_summary(summary, f"Summary ({out})")
    comparison_path = out / "comparison.csv"
    if comparison_path.exists():
        render_comparison(pd.read_csv(comparison_path, float_precision="round_trip"))
    return EXIT_OK


COMMANDS = {
    "topology": cmd_topology,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "replay": cmd_replay,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the skyheight command

    Args:
        argv: Arguments (sys.argv[1:] if None)

    Returns:
        int: 0 on success, 1 on usage or configuration errors, 2 on runtime failures
    """
    try:
        args = build_parser().parse_args(argv)
        SimUtils.setup_logging(args.verbose, args.log_file)
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except (UsageError, ConfigError) as e:
        err_console.print(f"error: {e}", markup=False)
        return EXIT_USAGE
    except KeyboardInterrupt:
        err_console.print("interrupted")
        return EXIT_RUNTIME
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        err_console.print(f"error: {e}", markup=False)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
