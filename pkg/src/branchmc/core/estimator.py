"""Monte Carlo estimator of the marked branching-diffusion representation.

One sample of Psi multiplies the weights a_I(t + T_n, X^K) / p_I of every branch event with
the payoff of every particle alive at the horizon. Two engines produce samples:

- "lineage": one genealogy at a time with shared path segments; any functional.
- "batch": the vectorized engine in `branchmc.core.batch`; functionals with a `batch` method.

Both engines derive their random streams from (seed, index) only, so results do not depend
on the number of worker threads.
"""

import math
import os
import time
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from branchmc.core.batch import BatchStart, batch_capable, run_batch
from branchmc.core.branching import DEFAULT_POPULATION_CAP, ParticleTree, simulate_tree
from branchmc.core.errors import (
    FeasibilityRejected,
    InputValidationError,
    NonFiniteState,
    PopulationCap,
    TooManyFailures,
)
from branchmc.core.feasibility import VarianceVerdict, classify, variance_radius_check
from branchmc.core.model import DiscretePath, ProblemSpec
from branchmc.core.paths import LineagePath, euler_step_path, extend_lineage
from branchmc.utils.logger import get_logger
from branchmc.utils.streams import SampleStreams, batch_stream, derive_seed, substream

log = get_logger("estimator")

ENGINES = ("auto", "lineage", "batch")
DEFAULT_BATCH_SIZE = 8192
DEFAULT_STEPS = 50
# Largest tolerated fraction of failed samples
FAILURE_TOLERANCE = 1e-4
# Samples per task handed to a worker by the lineage engine
_LINEAGE_CHUNK = 256
# exp overflows above this
_MAX_LOG = 709.0


def default_dt(spec: ProblemSpec) -> float:
    return spec.horizon / DEFAULT_STEPS


@dataclass(frozen=True)
class SampleOutcome:
    psi_value: float
    n_alive: int
    n_branchings: int
    extinct: bool
    max_abs_payoff: float = 0.0


@dataclass
class EstimateReport:
    mean: float
    std_error: float
    samples: int
    mean_alive: float
    mean_branchings: float
    elapsed: float
    beta: float
    offspring: tuple[float, ...]
    dt: float
    seed: int
    engine: str
    failed: int = 0
    extinct_fraction: float = 0.0
    bound_exceedances: int = 0
    r0: float | None = None

    def to_csv_row(self) -> dict[str, Any]:
        row = {
            "mean": self.mean,
            "std_error": self.std_error,
            "samples": self.samples,
            "mean_alive": self.mean_alive,
            "mean_branchings": self.mean_branchings,
            "extinct_fraction": self.extinct_fraction,
            "failed": self.failed,
            "bound_exceedances": self.bound_exceedances,
            "beta": self.beta,
            "offspring": " ".join(f"{p:g}" for p in self.offspring),
            "dt": self.dt,
            "seed": self.seed,
            "engine": self.engine,
            "elapsed": self.elapsed,
        }
        if self.r0 is not None:
            row["r0"] = self.r0
        return row

    def to_key_values(self) -> list[tuple[str, Any]]:
        return list(self.to_csv_row().items())


def _absorb(log_mag: float, sign: float, factor: float) -> tuple[float, float]:
    if factor == 0:
        return -math.inf, 0.0
    return log_mag + math.log(abs(factor)), sign * math.copysign(1.0, factor)


@dataclass
class SampleTrace:
    """Everything one lineage-engine sample produced, kept for debug dumps."""

    outcome: SampleOutcome
    tree: ParticleTree
    lineages: dict[int, LineagePath]


def _start_path(spec: ProblemSpec, start: DiscretePath | None) -> DiscretePath:
    prefix = spec.initial_path() if start is None else start
    if prefix.dim != spec.dim:
        raise InputValidationError(f"start path has dimension {prefix.dim}, expected {spec.dim}")
    if not prefix.end < spec.horizon:
        raise InputValidationError(
            f"start time {prefix.end} must lie before the horizon {spec.horizon}"
        )
    return prefix


def trace_sample(
    spec: ProblemSpec,
    start: DiscretePath,
    dt: float,
    streams: SampleStreams,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> SampleTrace:
    t0 = start.end
    horizon = spec.horizon
    tree = simulate_tree(
        spec.beta, spec.offspring_law, horizon - t0, streams.tree(), population_cap
    )

    root = LineagePath.root(start)
    lineages: dict[int, LineagePath] = {}
    for rec in tree.particles:
        parent = root if rec.parent is None else lineages[rec.parent]
        birth = t0 + rec.birth
        end = min(t0 + rec.end, horizon) if rec.branched else horizon
        lineages[rec.pid] = extend_lineage(
            parent, birth, rec.stream_id, spec, dt, streams.particle(rec.stream_id), until=end
        )

    law = spec.offspring_law
    log_mag, sign = 0.0, 1.0
    for count, pid in zip(tree.offspring_counts, tree.branchers, strict=True):
        path = lineages[pid].whole
        weight = float(spec.coeffs[count](path.end, path)) / law[count]
        log_mag, sign = _absorb(log_mag, sign, weight)

    max_abs = 0.0
    for pid in tree.alive_ids:
        value = float(spec.payoff(lineages[pid].whole))
        max_abs = max(max_abs, abs(value))
        log_mag, sign = _absorb(log_mag, sign, value)

    if sign == 0:
        psi = 0.0
    elif log_mag < _MAX_LOG:
        psi = sign * math.exp(log_mag)
    else:
        raise NonFiniteState(horizon)
    outcome = SampleOutcome(psi, tree.n_alive, tree.n_branchings, tree.extinct, max_abs)
    return SampleTrace(outcome, tree, lineages)


def sample_psi(
    spec: ProblemSpec,
    start: DiscretePath,
    dt: float,
    streams: SampleStreams,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> SampleOutcome:
    """One realization of Psi for the run starting at (start.end, start)."""
    return trace_sample(spec, start, dt, streams, population_cap).outcome


@dataclass
class _Samples:
    psi: np.ndarray
    n_alive: np.ndarray
    n_branchings: np.ndarray
    max_abs_payoff: np.ndarray
    failed: np.ndarray
    last_error: str = ""

    @classmethod
    def empty(cls, samples: int) -> "_Samples":
        return cls(
            psi=np.zeros(samples),
            n_alive=np.zeros(samples, dtype=np.int64),
            n_branchings=np.zeros(samples, dtype=np.int64),
            max_abs_payoff=np.zeros(samples),
            failed=np.zeros(samples, dtype=bool),
        )


def _run_lineage(
    spec: ProblemSpec,
    start: DiscretePath,
    samples: int,
    dt: float,
    seed: int,
    threads: int,
    population_cap: int,
) -> _Samples:
    out = _Samples.empty(samples)

    def work(indices: range) -> None:
        for i in indices:
            try:
                outcome = sample_psi(spec, start, dt, SampleStreams(seed, i), population_cap)
            except (PopulationCap, NonFiniteState) as e:
                out.failed[i] = True
                out.last_error = str(e)
                continue
            out.psi[i] = outcome.psi_value
            out.n_alive[i] = outcome.n_alive
            out.n_branchings[i] = outcome.n_branchings
            out.max_abs_payoff[i] = outcome.max_abs_payoff

    chunks = [
        range(lo, min(lo + _LINEAGE_CHUNK, samples))
        for lo in range(0, samples, _LINEAGE_CHUNK)
    ]
    _fan_out(work, chunks, threads)
    return out


def _run_batches(
    spec: ProblemSpec,
    start: DiscretePath,
    samples: int,
    dt: float,
    seed: int,
    threads: int,
    population_cap: int,
    batch_size: int,
) -> _Samples:
    origin = BatchStart.from_path(start)
    out = _Samples.empty(samples)

    def work(block: range) -> None:
        batch_index = block.start // batch_size
        result = run_batch(
            spec, origin, len(block), dt, batch_stream(seed, batch_index), population_cap
        )
        sl = slice(block.start, block.stop)
        out.psi[sl] = result.psi
        out.n_alive[sl] = result.n_alive
        out.n_branchings[sl] = result.n_branchings
        out.max_abs_payoff[sl] = result.max_abs_payoff
        out.failed[sl] = result.failed
        if result.failed.any():
            out.last_error = "population cap or non-finite state in batch engine"

    blocks = [range(lo, min(lo + batch_size, samples)) for lo in range(0, samples, batch_size)]
    _fan_out(work, blocks, threads)
    return out


def _fan_out(work: Callable[[range], None], tasks: list[range], threads: int) -> None:
    if threads <= 1 or len(tasks) <= 1:
        for task in tasks:
            work(task)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # list() re-raises the first worker exception here
        list(pool.map(work, tasks))


def resolve_engine(spec: ProblemSpec, engine: str) -> str:
    if engine not in ENGINES:
        raise InputValidationError(f"unknown engine {engine!r}; choose from {ENGINES}")
    capable = batch_capable(spec)
    if engine == "batch" and not capable:
        raise InputValidationError("batch engine needs functionals with a batch method")
    if engine == "auto":
        return "batch" if capable else "lineage"
    return engine


def _estimate(
    spec: ProblemSpec,
    start: DiscretePath | None,
    samples: int,
    dt: float | None,
    seed: int,
    threads: int | None,
    engine: str,
    population_cap: int,
    batch_size: int,
) -> EstimateReport:
    if samples < 2:
        raise InputValidationError(f"need at least 2 samples, got {samples}")
    if batch_size < 1:
        raise InputValidationError(f"batch_size must be positive, got {batch_size}")
    prefix = _start_path(spec, start)
    step = default_dt(spec) if dt is None else dt
    if step <= 0:
        raise InputValidationError(f"dt must be positive, got {step}")
    workers = threads or os.cpu_count() or 1
    chosen = resolve_engine(spec, engine)

    began = time.perf_counter()
    if chosen == "batch":
        raw = _run_batches(spec, prefix, samples, step, seed, workers, population_cap, batch_size)
    else:
        raw = _run_lineage(spec, prefix, samples, step, seed, workers, population_cap)
    elapsed = time.perf_counter() - began

    failed = int(raw.failed.sum())
    if failed > FAILURE_TOLERANCE * samples:
        raise TooManyFailures(failed, samples, raw.last_error)
    if failed:
        log.warning(f"{failed} of {samples} samples failed and were dropped ({raw.last_error})")

    ok = ~raw.failed
    psi = raw.psi[ok]
    n = psi.size
    exceed = int((raw.max_abs_payoff[ok] > spec.payoff_bound * (1 + 1e-12)).sum())
    if exceed:
        log.warning(
            f"{spec.name}: {exceed} samples had |psi| above the declared bound "
            f"{spec.payoff_bound:g}"
        )

    return EstimateReport(
        mean=float(np.mean(psi)),
        std_error=float(np.std(psi, ddof=1) / math.sqrt(n)),
        samples=n,
        mean_alive=float(np.mean(raw.n_alive[ok])),
        mean_branchings=float(np.mean(raw.n_branchings[ok])),
        elapsed=elapsed,
        beta=spec.beta,
        offspring=tuple(spec.offspring_law.tolist()),
        dt=step,
        seed=seed,
        engine=chosen,
        failed=failed,
        extinct_fraction=float(np.mean(raw.n_alive[ok] == 0)),
        bound_exceedances=exceed,
    )


def estimate(
    spec: ProblemSpec,
    start: DiscretePath | None = None,
    samples: int = 2**16,
    dt: float | None = None,
    seed: int = 0,
    threads: int | None = None,
    engine: str = "auto",
    population_cap: int = DEFAULT_POPULATION_CAP,
    batch_size: int = DEFAULT_BATCH_SIZE,
    certify: bool = True,
) -> EstimateReport:
    """Estimate v(t, start) where t = start.end (t = 0 and the constant x0 path by default).

    With `certify` the problem must pass `classify`; the report then carries R0 and the mean is
    checked against it.
    """
    r0 = None
    if certify:
        analysis = classify(spec)
        if not analysis.feasible:
            raise FeasibilityRejected(analysis)
        r0 = analysis.r0
        if variance_radius_check(spec) is VarianceVerdict.UNCERTIFIED:
            log.warning(
                f"{spec.name}: finite variance not certified for offspring law "
                f"{tuple(spec.offspring_law.tolist())}"
            )

    log.info(f"Estimating {spec.name} with {samples} samples (seed={seed})")
    report = _estimate(spec, start, samples, dt, seed, threads, engine, population_cap, batch_size)
    report.r0 = r0
    if r0 is not None and abs(report.mean) > r0 + 5 * report.std_error:
        log.warning(f"{spec.name}: |mean| {abs(report.mean):.6g} exceeds R0 {r0:.6g}")
    log.info(
        f"{spec.name}: mean={report.mean:.6g} +/- {report.std_error:.2g} "
        f"({report.engine}, {report.elapsed:.2f}s)"
    )
    return report


@dataclass(frozen=True)
class TowerCheck:
    lhs: float
    lhs_std_error: float
    rhs: float
    rhs_std_error: float

    @property
    def z_score(self) -> float:
        spread = math.hypot(self.lhs_std_error, self.rhs_std_error)
        return (self.lhs - self.rhs) / spread if spread > 0 else 0.0


def _tower_term(
    spec: ProblemSpec,
    s: float,
    index: int,
    inner: int,
    dt: float,
    seed: int,
    engine: str,
    population_cap: int,
) -> float:
    rng = substream(seed, index, 0)
    first = rng.exponential(1.0 / spec.beta) if spec.beta > 0 else math.inf
    stop = min(first, s)

    initial = spec.initial_path()
    segment = euler_step_path(
        spec, LineagePath.root(initial), 0.0, stop, dt, substream(seed, index, 1)
    )
    path = initial.concat(segment)

    def inner_value(j: int) -> float:
        report = _estimate(
            spec, path, inner, dt, derive_seed(seed, index, j), 1, engine, population_cap,
            DEFAULT_BATCH_SIZE,
        )
        return report.mean

    if first > s:
        return inner_value(0)

    law = spec.offspring_law
    count = int(rng.choice(law.size, p=law))
    value = float(spec.coeffs[count](stop, path)) / law[count]
    for j in range(count):
        value *= inner_value(j)
    return value


def tower_check(
    spec: ProblemSpec,
    s: float,
    outer: int,
    inner: int,
    dt: float | None = None,
    seed: int = 0,
    threads: int | None = None,
    engine: str = "auto",
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> TowerCheck:
    """Compare v(0, x0) with the first-branching decomposition at the stopping time T_1 ^ s.

    When the root survives past s the right side uses v(s, X); otherwise it uses the weight of
    the first event times a product of independent estimates of v(T_1, X).
    """
    if not 0 < s < spec.horizon:
        raise InputValidationError(f"intermediate time must lie in (0, {spec.horizon}), got {s}")
    if outer < 2 or inner < 2:
        raise InputValidationError("tower check needs at least 2 outer and 2 inner samples")
    step = default_dt(spec) if dt is None else dt
    chosen = resolve_engine(spec, engine)
    workers = threads or os.cpu_count() or 1

    log.info(f"Tower check for {spec.name} at s={s} ({outer} x {inner} samples)")
    lhs = _estimate(
        spec, None, outer * inner, step, derive_seed(seed, 0), workers, chosen,
        population_cap, DEFAULT_BATCH_SIZE,
    )

    rhs_seed = derive_seed(seed, 1)
    terms = np.zeros(outer)

    def work(indices: range) -> None:
        for i in indices:
            terms[i] = _tower_term(spec, s, i, inner, step, rhs_seed, chosen, population_cap)

    _fan_out(work, [range(i, i + 1) for i in range(outer)], workers)
    check = TowerCheck(
        lhs=lhs.mean,
        lhs_std_error=lhs.std_error,
        rhs=float(np.mean(terms)),
        rhs_std_error=float(np.std(terms, ddof=1) / math.sqrt(outer)),
    )
    log.info(f"Tower check: lhs={check.lhs:.6g} rhs={check.rhs:.6g} z={check.z_score:.2f}")
    return check


def debug_samples(
    spec: ProblemSpec,
    indices: Iterable[int],
    dt: float | None = None,
    seed: int = 0,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> list[SampleTrace]:
    """Re-run selected lineage-engine samples and keep their trees and paths."""
    step = default_dt(spec) if dt is None else dt
    start = spec.initial_path()
    return [
        trace_sample(spec, start, step, SampleStreams(seed, i), population_cap) for i in indices
    ]
