#!/usr/bin/env python3
"""branchmc - CLI Entry Point."""

import argparse
import sys
from collections.abc import Iterable
from pathlib import Path
from typing import Any

import pandas as pd

from branchmc.core.config import RunConfig, load_run_config
from branchmc.core.errors import BranchMCError, FeasibilityRejected
from branchmc.core.estimator import default_dt
from branchmc.core.experiments import (
    BENCHMARKS,
    TABLES,
    benchmark,
    convergence,
    feasibility_report,
    halving_sweep,
    rho_frame,
    run_table,
    solve,
)
from branchmc.core.reference import FDGrid
from branchmc.utils.logger import get_logger, set_verbosity

log = get_logger("cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


def print_key_values(items: Iterable[tuple[str, Any]]) -> None:
    for key, value in items:
        if isinstance(value, float):
            value = f"{value:.10g}"
        print(f"{key} = {value}")


def write_frame(frame: pd.DataFrame, out: Path | str | None) -> None:
    if out is None:
        frame.to_csv(sys.stdout, index=False)
        return
    frame.to_csv(out, index=False)
    log.info(f"Wrote {len(frame)} rows to {out}")


def _load(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config)
    if not (args.verbose or args.quiet):
        set_verbosity(config.output.verbosity)
    return config.with_overrides(
        samples_log2=args.samples_log2,
        dt=args.dt,
        seed=args.seed,
        threads=args.threads,
        csv=str(args.out) if args.out else None,
    )


def cmd_feasibility(args: argparse.Namespace) -> int:
    config = _load(args)
    spec = config.problem.build()
    analysis, summary = feasibility_report(spec, psi_shift=args.psi_shift)
    print_key_values(summary.items())
    if config.output.csv:
        write_frame(pd.DataFrame([summary]), config.output.csv)
    if args.rho_csv:
        write_frame(rho_frame(analysis), args.rho_csv)
    return EXIT_OK if analysis.feasible else EXIT_REJECTED


def cmd_solve(args: argparse.Namespace) -> int:
    config = _load(args)
    report = solve(config)
    print_key_values(report.to_key_values())
    if config.output.csv:
        write_frame(pd.DataFrame([report.to_csv_row()]), config.output.csv)
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    grid = None
    if args.x_nodes or args.a_nodes or args.time_steps:
        defaults = FDGrid()
        grid = FDGrid(
            x_nodes=args.x_nodes or defaults.x_nodes,
            a_nodes=args.a_nodes or defaults.a_nodes,
            time_steps=args.time_steps,
        )
    if args.refine:
        grid = (grid or FDGrid()).refined()
    result = benchmark(args.name, grid)
    print_key_values(result.items())
    return EXIT_OK


def cmd_table(args: argparse.Namespace) -> int:
    table = run_table(
        args.table_id,
        n_min=args.n_min,
        n_max=args.n_max,
        seed=args.seed or 0,
        step=args.step,
        dt=args.dt,
        threads=args.threads,
    )
    write_frame(table, args.out)
    for line in table.attrs.get("warnings", []):
        print(f"# {line}", file=sys.stderr)
    return EXIT_OK


def cmd_convergence(args: argparse.Namespace) -> int:
    config = _load(args)
    spec = config.problem.build()
    run = config.run
    dts = halving_sweep(run.dt or default_dt(spec), args.halvings)
    top = run.samples_log2
    sizes = args.n_values or [n for n in (top - 4, top - 2, top) if n >= 1]
    frame = convergence(spec, dts, sizes, seed=run.seed, threads=run.threads, engine=run.engine)
    write_frame(frame, config.output.csv)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--samples-log2", type=int, help="Use 2^N Monte Carlo samples")
    common.add_argument("--dt", type=float, help="Euler time step (default: T/50)")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--threads", type=int, help="Worker threads (default: all cores)")
    common.add_argument("--out", type=Path, help="Write CSV output to this file")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="branchmc",
        description="Branching-diffusion Monte Carlo solver for semilinear PDEs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s feasibility asian_pde1.yaml       # Classify and print R0
  %(prog)s solve constant_payoff.yaml         # Estimate v(0, x0)
  %(prog)s benchmark pde1-T2                  # Finite-difference oracle
  %(prog)s table 1 --n-max 16 --out t1.csv    # Reproduce a price table
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("feasibility", parents=[common], help="Well-posedness analysis")
    p.add_argument("config", type=Path)
    p.add_argument("--psi-shift", type=float, help="Add epsilon to the payoff bound")
    p.add_argument("--rho-csv", type=Path, help="Write the rho trajectory as CSV")
    p.set_defaults(handler=cmd_feasibility)

    p = sub.add_parser("solve", parents=[common], help="Estimate the solution at the start")
    p.add_argument("config", type=Path)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("benchmark", parents=[common], help="Run a reference oracle")
    p.add_argument("name", choices=sorted(BENCHMARKS))
    p.add_argument("--x-nodes", type=int)
    p.add_argument("--a-nodes", type=int)
    p.add_argument("--time-steps", type=int)
    p.add_argument("--refine", action="store_true", help="Halve the grid spacing")
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("table", parents=[common], help="Reproduce a price table as CSV")
    p.add_argument("table_id", type=int, choices=sorted(TABLES))
    p.add_argument("--n-min", type=int, default=12)
    p.add_argument("--n-max", type=int, default=22)
    p.add_argument("--step", type=int, default=2)
    p.set_defaults(handler=cmd_table)

    p = sub.add_parser("convergence", parents=[common], help="Time-step and sample-size sweep")
    p.add_argument("config", type=Path)
    p.add_argument("--halvings", type=int, default=2, help="Number of dt halvings")
    p.add_argument("--n-values", type=int, nargs="+", help="Sample sizes as powers of two")
    p.set_defaults(handler=cmd_convergence)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the branchmc command line."""
    args = build_parser().parse_args(argv)

    if args.verbose:
        set_verbosity("debug")
    elif args.quiet:
        set_verbosity("warning")

    try:
        return int(args.handler(args))
    except FeasibilityRejected as e:
        print(f"error: {e}", file=sys.stderr)
        print_key_values(e.analysis.to_key_values().items())
        return EXIT_REJECTED
    except (BranchMCError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
