"""Built-in instances and experiment drivers behind the CLI subcommands."""

import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from branchmc.core.branching import population_moments
from branchmc.core.config import RunConfig
from branchmc.core.errors import InputValidationError
from branchmc.core.estimator import EstimateReport, debug_samples, default_dt, estimate
from branchmc.core.feasibility import (
    EllAnalysis,
    classify,
    variance_bound,
    variance_radius_check,
)
from branchmc.core.functionals import (
    CallOnAverage,
    Constant,
    ConstantPayoff,
    GeometricVol,
    ZeroDrift,
)
from branchmc.core.model import ProblemSpec
from branchmc.core.paths import dump_path_csv
from branchmc.core.reference import (
    FDGrid,
    FDProblem,
    average_call_payoff,
    constant_payoff_solution,
    fd_solve,
)
from branchmc.utils.logger import capture_warnings, get_logger

log = get_logger("experiments")

SIGMA = 0.2
BETA = 0.1
STRIKE = 1.0
# Declared sup of the average-call payoff; with a_2 = 1 this puts ell(1) = 0
ASIAN_PAYOFF_BOUND = 1.0

# table id -> (dimension, horizon)
TABLES: dict[int, tuple[int, float]] = {1: (1, 2.0), 2: (1, 5.0), 3: (4, 2.0), 4: (4, 5.0)}
TABLE_COLUMNS = [
    "N",
    "fair_pde1_pct",
    "stdev_pde1_pct",
    "fair_pde2_pct",
    "stdev_pde2_pct",
    "cpu_seconds",
]


def _variant(sign: int) -> str:
    if sign not in (1, -1):
        raise InputValidationError(f"sign must be +1 or -1, got {sign}")
    return "pde1" if sign == 1 else "pde2"


def asian_basket_problem(
    dim: int,
    horizon: float,
    sign: int = 1,
    beta: float = BETA,
    sigma: float = SIGMA,
    strike: float = STRIKE,
) -> ProblemSpec:
    """Uncorrelated GBM basket with F(y) = sign * y^2 and psi = (mean_i A^i_T / T - K)^+."""
    return ProblemSpec(
        dim=dim,
        horizon=horizon,
        beta=beta,
        coeffs=(Constant(0.0), Constant(0.0), Constant(float(sign))),
        coeff_bounds=(0.0, 0.0, 1.0),
        payoff=CallOnAverage(strike=strike, horizon=horizon),
        payoff_bound=ASIAN_PAYOFF_BOUND,
        drift=ZeroDrift(),
        vol=GeometricVol(sigma),
        x0=np.ones(dim),
        name=f"asian_d{dim}_T{horizon:g}_{_variant(sign)}",
    )


def constant_payoff_problem(
    dim: int,
    horizon: float,
    sign: int = 1,
    beta: float = BETA,
    value: float = 0.5,
    offspring: Sequence[float] | None = None,
) -> ProblemSpec:
    """Same diffusion as the basket instance with psi == value."""
    return ProblemSpec(
        dim=dim,
        horizon=horizon,
        beta=beta,
        coeffs=(Constant(0.0), Constant(0.0), Constant(float(sign))),
        coeff_bounds=(0.0, 0.0, 1.0),
        payoff=ConstantPayoff(value),
        payoff_bound=abs(value),
        drift=ZeroDrift(),
        vol=GeometricVol(SIGMA),
        x0=np.ones(dim),
        offspring=tuple(offspring) if offspring is not None else None,
        name=f"constant_d{dim}_T{horizon:g}_{_variant(sign)}",
    )


def run_table(
    table_id: int,
    n_min: int = 12,
    n_max: int = 22,
    seed: int = 0,
    step: int = 2,
    dt: float | None = None,
    threads: int | None = None,
    engine: str = "auto",
) -> pd.DataFrame:
    """Prices in percent for N = n_min, n_min + step, ..., n_max (2^N samples each)."""
    if table_id not in TABLES:
        raise InputValidationError(f"table id must be one of {sorted(TABLES)}, got {table_id}")
    if not 1 <= n_min <= n_max:
        raise InputValidationError(f"need 1 <= n_min <= n_max, got {n_min}..{n_max}")
    dim, horizon = TABLES[table_id]
    problems = {sign: asian_basket_problem(dim, horizon, sign) for sign in (1, -1)}

    rows = []
    descendants = []
    with capture_warnings() as warnings:
        for n in range(n_min, n_max + 1, step):
            began = time.process_time()
            reports = {
                sign: estimate(
                    spec, samples=2**n, dt=dt, seed=seed, threads=threads, engine=engine
                )
                for sign, spec in problems.items()
            }
            cpu = time.process_time() - began
            rows.append(
                {
                    "N": n,
                    "fair_pde1_pct": 100 * reports[1].mean,
                    "stdev_pde1_pct": 100 * reports[1].std_error,
                    "fair_pde2_pct": 100 * reports[-1].mean,
                    "stdev_pde2_pct": 100 * reports[-1].std_error,
                    "cpu_seconds": cpu,
                }
            )
            descendants.append(reports[1].mean_alive)
            log.info(
                f"Table {table_id} N={n}: {rows[-1]['fair_pde1_pct']:.2f} / "
                f"{rows[-1]['fair_pde2_pct']:.2f} % ({cpu:.1f}s cpu)"
            )

    table = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    table.attrs["warnings"] = list(warnings)
    table.attrs["mean_alive"] = descendants
    return table


def convergence(
    spec: ProblemSpec,
    dts: Sequence[float],
    samples_log2: Sequence[int],
    seed: int = 0,
    threads: int | None = None,
    engine: str = "auto",
) -> pd.DataFrame:
    """Estimates over the product of time steps and sample sizes."""
    rows = []
    for dt in dts:
        for n in samples_log2:
            report = estimate(
                spec, samples=2**n, dt=dt, seed=seed, threads=threads, engine=engine
            )
            rows.append(
                {
                    "dt": dt,
                    "N": n,
                    "mean": report.mean,
                    "std_error": report.std_error,
                    "mean_alive": report.mean_alive,
                    "mean_branchings": report.mean_branchings,
                    "elapsed": report.elapsed,
                }
            )
    return pd.DataFrame(rows)


def halving_sweep(dt: float, halvings: int) -> list[float]:
    return [dt / 2**k for k in range(halvings + 1)]


def _fd_benchmark(horizon: float, sign: int, beta: float) -> Callable[[FDGrid | None], dict]:
    def run(grid: FDGrid | None = None) -> dict[str, Any]:
        problem = FDProblem(
            sigma=SIGMA,
            beta=beta,
            sign=sign,
            payoff=average_call_payoff(horizon, STRIKE),
            horizon=horizon,
        )
        solution = fd_solve(problem, grid)
        return {
            "value": solution.value,
            "value_pct": 100 * solution.value,
            **solution.diagnostics(),
        }

    return run


def _closed_form_benchmark(horizon: float, sign: int) -> Callable[[FDGrid | None], dict]:
    def run(grid: FDGrid | None = None) -> dict[str, Any]:
        return {"value": constant_payoff_solution(BETA, horizon, sign), "beta": BETA}

    return run


BENCHMARKS: dict[str, Callable[[FDGrid | None], dict[str, Any]]] = {
    "constant-plus": _closed_form_benchmark(2.0, 1),
    "constant-minus": _closed_form_benchmark(2.0, -1),
    "constant-plus-T5": _closed_form_benchmark(5.0, 1),
    "constant-minus-T5": _closed_form_benchmark(5.0, -1),
    "pde1-T2": _fd_benchmark(2.0, 1, BETA),
    "pde2-T2": _fd_benchmark(2.0, -1, BETA),
    "pde1-T5": _fd_benchmark(5.0, 1, BETA),
    "pde2-T5": _fd_benchmark(5.0, -1, BETA),
    "linear-T2": _fd_benchmark(2.0, 1, 0.0),
    "linear-T5": _fd_benchmark(5.0, 1, 0.0),
}


def benchmark(name: str, grid: FDGrid | None = None) -> dict[str, Any]:
    try:
        runner = BENCHMARKS[name]
    except KeyError:
        raise InputValidationError(
            f"unknown benchmark {name!r}; known: {', '.join(BENCHMARKS)}"
        ) from None
    began = time.perf_counter()
    result = runner(grid)
    result["elapsed"] = time.perf_counter() - began
    log.info(f"Benchmark {name}: {result['value']:.6g}")
    return result


def feasibility_report(
    spec: ProblemSpec, psi_shift: float | None = None
) -> tuple[EllAnalysis, dict[str, Any]]:
    analysis = classify(spec, psi_shift=psi_shift)
    moments = population_moments(spec.beta, spec.offspring_law, spec.horizon)
    summary = analysis.to_key_values() | {
        "variance": variance_radius_check(spec, psi_shift).value,
        "variance_bound": variance_bound(spec, psi_shift),
        "mean_alive": moments.mean_alive,
        "mean_branchings": moments.mean_branchings,
    }
    return analysis, summary


def rho_frame(analysis: EllAnalysis) -> pd.DataFrame:
    rho = analysis.rho_trajectory
    return pd.DataFrame({"time": rho.grid, "rho": rho.values[:, 0]})


def solve(config: RunConfig) -> EstimateReport:
    """Run the estimator for a configuration and write the requested debug dumps."""
    spec = config.problem.build()
    run = config.run
    report = estimate(
        spec,
        samples=run.samples,
        dt=run.dt,
        seed=run.seed,
        threads=run.threads,
        engine=run.engine,
        population_cap=run.population_cap,
        batch_size=run.batch_size,
    )
    output = config.output
    if output.dump_trees or output.dump_paths:
        trace = debug_samples(
            spec,
            [0],
            dt=run.dt or default_dt(spec),
            seed=run.seed,
            population_cap=run.population_cap,
        )[0]
        if output.dump_trees:
            Path(output.dump_trees).write_text(trace.tree.dump() + "\n")
            log.info(f"Wrote tree dump to {output.dump_trees}")
        if output.dump_paths:
            directory = Path(output.dump_paths)
            directory.mkdir(parents=True, exist_ok=True)
            for pid, lineage in trace.lineages.items():
                dump_path_csv(lineage, directory / f"sample0_particle{pid}.csv")
            log.info(f"Wrote {len(trace.lineages)} path dumps to {directory}")
    return report
