import math

import numpy as np
import pytest

from branchmc.core.errors import FeasibilityRejected, InputValidationError, TooManyFailures
from branchmc.core.estimator import (
    debug_samples,
    estimate,
    resolve_engine,
    sample_psi,
    tower_check,
)
from branchmc.core.experiments import asian_basket_problem, constant_payoff_problem
from branchmc.core.feasibility import variance_bound
from branchmc.core.functionals import Constant, ConstantPayoff, GeometricVol, ZeroDrift
from branchmc.core.model import DiscretePath, ProblemSpec
from branchmc.core.reference import constant_payoff_solution
from branchmc.utils.streams import SampleStreams

from conftest import constant_spec


def within(report, expected, k=4.0) -> bool:
    return abs(report.mean - expected) <= k * report.std_error


def test_neutral_nonlinearity_returns_the_payoff():
    spec = constant_spec((0.0, 1.0), 0.7, beta=1.0)
    start = spec.initial_path()
    for i in range(20):
        outcome = sample_psi(spec, start, 0.1, SampleStreams(3, i))
        assert outcome.psi_value == pytest.approx(0.7)
        assert outcome.n_alive == 1


def test_sign_tracks_branch_count():
    spec = constant_spec((0.0, 0.0, -1.0), 0.5, beta=0.5)
    start = spec.initial_path()
    for i in range(30):
        outcome = sample_psi(spec, start, 0.1, SampleStreams(0, i))
        expected = (-1) ** outcome.n_branchings * 0.5**outcome.n_alive
        assert outcome.n_alive == 1 + outcome.n_branchings
        assert outcome.psi_value == pytest.approx(expected)


def test_no_branching_evaluates_the_payoff_once():
    spec = constant_spec((0.0, 0.0, 1.0), 0.5, beta=0.0)
    outcome = sample_psi(spec, spec.initial_path(), 0.1, SampleStreams(0, 0))
    assert outcome.n_branchings == 0
    assert outcome.psi_value == 0.5


def test_non_markov_coefficients_use_the_lineage_engine():
    spec = ProblemSpec(
        dim=1,
        horizon=1.0,
        beta=0.1,
        coeffs=(Constant(0.0), lambda t, path: 0.5),
        coeff_bounds=(0.0, 0.5),
        payoff=ConstantPayoff(1.0),
        payoff_bound=1.0,
        drift=ZeroDrift(),
        vol=GeometricVol(0.2),
        x0=np.ones(1),
    )
    assert resolve_engine(spec, "auto") == "lineage"
    with pytest.raises(InputValidationError):
        resolve_engine(spec, "batch")
    with pytest.raises(InputValidationError):
        resolve_engine(spec, "gpu")


@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("horizon", [2.0, 5.0])
def test_constant_payoff_matches_closed_form(sign, horizon):
    spec = constant_payoff_problem(4, horizon, sign)
    report = estimate(spec, samples=2**16, seed=1, engine="batch")
    assert within(report, constant_payoff_solution(0.1, horizon, sign))
    assert abs(report.mean) <= report.r0 + 5 * report.std_error


def test_lineage_engine_matches_closed_form():
    spec = constant_payoff_problem(1, 2.0, 1)
    report = estimate(spec, samples=2**12, dt=0.2, seed=2, engine="lineage", threads=2)
    assert report.engine == "lineage"
    assert within(report, constant_payoff_solution(0.1, 2.0, 1))


def test_estimate_from_an_intermediate_state():
    spec = constant_payoff_problem(1, 2.0, 1)
    start = DiscretePath(np.array([0.0, 1.0]), np.array([[1.0], [1.1]]))
    report = estimate(spec, start=start, samples=2**15, seed=4)
    assert within(report, constant_payoff_solution(0.1, 1.0, 1))
    with pytest.raises(InputValidationError):
        estimate(spec, start=DiscretePath.constant([1.0], time=2.0), samples=16)


def test_offspring_law_does_not_change_the_mean():
    binary = constant_payoff_problem(1, 2.0, 1)
    mixed = constant_payoff_problem(1, 2.0, 1, offspring=(0.5, 0.0, 0.5))
    a = estimate(binary, samples=2**16, seed=5)
    b = estimate(mixed, samples=2**16, seed=6)
    assert abs(a.mean - b.mean) <= 4 * math.hypot(a.std_error, b.std_error)

    second_moment = b.std_error**2 * b.samples + b.mean**2
    assert second_moment <= variance_bound(mixed) * 1.05


def test_results_do_not_depend_on_thread_count():
    spec = asian_basket_problem(1, 2.0)
    reports = [
        estimate(spec, samples=2**14, seed=7, threads=n, batch_size=1024) for n in (1, 4, 16)
    ]
    assert reports[0].mean == reports[1].mean == reports[2].mean
    assert reports[0].std_error == reports[2].std_error

    lineage = [
        estimate(spec, samples=600, seed=7, threads=n, engine="lineage") for n in (1, 4)
    ]
    assert lineage[0].mean == lineage[1].mean


def test_engines_agree_on_the_basket_instance():
    spec = asian_basket_problem(1, 2.0)
    batch = estimate(spec, samples=2**14, seed=8, engine="batch")
    lineage = estimate(spec, samples=2**11, seed=9, engine="lineage")
    assert abs(batch.mean - lineage.mean) <= 4 * math.hypot(batch.std_error, lineage.std_error)


def test_infeasible_problem_is_rejected():
    spec = constant_spec((0.0, 0.0, 1.0), 2.0, horizon=8.0)
    with pytest.raises(FeasibilityRejected) as info:
        estimate(spec, samples=16)
    assert info.value.analysis.blow_up_time == pytest.approx(10 * math.log(2), abs=0.01)


def test_population_cap_failures_abort_the_run():
    spec = constant_spec((0.0, 0.0, 1.0), 0.5, beta=1.0, horizon=2.0)
    with pytest.raises(TooManyFailures):
        estimate(spec, samples=2**10, population_cap=1)
    with pytest.raises(TooManyFailures):
        estimate(spec, samples=2**8, population_cap=1, engine="lineage")


def test_report_rows():
    spec = constant_payoff_problem(1, 2.0, -1)
    report = estimate(spec, samples=2**10, seed=0)
    row = report.to_csv_row()
    assert row["samples"] == 2**10
    assert row["engine"] == "batch"
    assert row["offspring"] == "0 0 1"
    assert row["r0"] == pytest.approx(0.5)
    assert 0.0 <= report.extinct_fraction <= 1.0


def test_tower_check_constant_payoff():
    spec = constant_payoff_problem(1, 2.0, 1)
    check = tower_check(spec, 1.0, outer=400, inner=256, seed=3)
    assert abs(check.z_score) <= 3.0


def test_tower_check_basket_instance():
    spec = asian_basket_problem(1, 2.0)
    check = tower_check(spec, 1.0, outer=400, inner=128, seed=4)
    assert abs(check.z_score) <= 3.0


def test_tower_check_without_branching():
    spec = asian_basket_problem(1, 2.0, beta=0.0)
    check = tower_check(spec, 0.5, outer=400, inner=128, seed=5)
    assert abs(check.z_score) <= 3.0
    with pytest.raises(InputValidationError):
        tower_check(spec, 2.0, outer=10, inner=10)


def test_debug_samples_keep_trees_and_paths():
    spec = asian_basket_problem(1, 2.0)
    traces = debug_samples(spec, [0, 1], seed=3)
    assert len(traces) == 2
    for trace in traces:
        assert set(trace.lineages) == {rec.pid for rec in trace.tree.particles}
        for pid in trace.tree.alive_ids:
            assert trace.lineages[pid].end == pytest.approx(2.0)
