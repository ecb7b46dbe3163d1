import math

import numpy as np
import pytest

from branchmc.core.errors import InputValidationError, UnstableGrid
from branchmc.core.reference import (
    FDGrid,
    FDProblem,
    average_call_payoff,
    bernoulli_rho,
    constant_payoff,
    constant_payoff_solution,
    fd_solve,
    reaction_ceiling,
)

COARSE = FDGrid(x_nodes=41, a_nodes=81)


def asian(sign: int, beta: float = 0.1, horizon: float = 2.0) -> FDProblem:
    return FDProblem(
        sigma=0.2,
        beta=beta,
        sign=sign,
        payoff=average_call_payoff(horizon, 1.0),
        horizon=horizon,
    )


def test_constant_payoff_closed_form():
    assert constant_payoff_solution(0.1, 2.0, 1) == pytest.approx(0.450166, abs=1e-6)
    assert constant_payoff_solution(0.1, 2.0, -1) == pytest.approx(1 / (3 * math.exp(0.2) - 1))
    assert constant_payoff_solution(0.1, 2.0, -1) == pytest.approx(0.375346, abs=1e-6)
    assert constant_payoff_solution(0.0, 2.0, 1) == pytest.approx(0.5)
    assert constant_payoff_solution(0.1, 2.0, 1, value=0.0) == 0.0
    with pytest.raises(InputValidationError):
        constant_payoff_solution(0.1, 2.0, 0)


def test_bernoulli_rho():
    assert bernoulli_rho(0.5, 0.1, 0.0) == pytest.approx(1.0)
    assert bernoulli_rho(0.5, 0.1, 2.0) == pytest.approx(1 / (0.5 + 0.5 * math.exp(0.2)))
    assert bernoulli_rho(1.0, 0.1, 5.0) == pytest.approx(1.0)


@pytest.mark.parametrize("sign", [1, -1])
def test_degenerate_grid_matches_closed_form(sign):
    problem = FDProblem(
        sigma=0.2, beta=0.1, sign=sign, payoff=constant_payoff(0.5), horizon=2.0
    )
    solution = fd_solve(problem, FDGrid(x_nodes=1, a_nodes=1))
    assert solution.value == pytest.approx(constant_payoff_solution(0.1, 2.0, sign), abs=1e-6)


def test_constant_payoff_on_a_full_grid():
    problem = FDProblem(sigma=0.2, beta=0.1, sign=1, payoff=constant_payoff(0.5), horizon=2.0)
    solution = fd_solve(problem, COARSE)
    assert solution.value == pytest.approx(constant_payoff_solution(0.1, 2.0, 1), abs=1e-4)
    np.testing.assert_allclose(solution.surface, solution.value, atol=1e-12)


def test_unstable_grid_is_rejected():
    with pytest.raises(UnstableGrid, match="steps"):
        fd_solve(asian(1), FDGrid(x_nodes=101, a_nodes=101, time_steps=10))


def test_rejects_bad_problems():
    with pytest.raises(InputValidationError):
        asian(0)
    with pytest.raises(InputValidationError):
        FDProblem(sigma=0.2, beta=0.1, sign=1, payoff=constant_payoff(1.0), horizon=0.0)
    with pytest.raises(InputValidationError):
        fd_solve(asian(1), FDGrid(x_nodes=0))


def test_comparison_between_variants():
    pde1 = fd_solve(asian(1), COARSE).value
    pde2 = fd_solve(asian(-1), COARSE).value
    linear = fd_solve(asian(1, beta=0.0), COARSE).value
    assert pde2 <= pde1 <= linear
    assert 0.0 < pde2


def test_linear_limit_is_close_to_the_quoted_price():
    assert fd_solve(asian(1, beta=0.0), COARSE).value == pytest.approx(0.0652, abs=0.004)


def test_refined_grid_doubles_the_resolution():
    grid = FDGrid(x_nodes=11, a_nodes=21, time_steps=5).refined()
    assert (grid.x_nodes, grid.a_nodes, grid.time_steps) == (21, 41, None)
    assert FDGrid(x_nodes=1, a_nodes=1).refined().x_nodes == 1


def test_diagnostics():
    solution = fd_solve(asian(1), COARSE)
    info = solution.diagnostics()
    assert info["x_nodes"] == 41
    assert info["a_nodes"] == 81
    assert info["time_steps"] * info["dt"] == pytest.approx(2.0)
    assert info["x_max"] == pytest.approx(math.exp(4 * 0.2 * math.sqrt(2.0)))


def test_reaction_ceiling():
    assert reaction_ceiling(0.1, 5.0) == pytest.approx(1 / (1 - math.exp(-0.5)))
    assert reaction_ceiling(0.1, 2.0) == pytest.approx(5.5167, abs=1e-4)
    assert reaction_ceiling(0.0, 5.0) == math.inf
    # the constant payoff just below the level stays finite, just above it does not
    level = reaction_ceiling(0.1, 5.0)
    assert constant_payoff_solution(0.1, 5.0, 1, value=0.999 * level) > 0
    assert constant_payoff_solution(0.1, 5.0, 1, value=1.001 * level) < 0


def test_long_horizon_pde1_stays_finite():
    solution = fd_solve(asian(1, horizon=5.0), COARSE)
    assert np.all(np.isfinite(solution.surface))
    assert solution.clipped_nodes > 0
    assert solution.payoff_cap == pytest.approx(0.8 * reaction_ceiling(0.1, 5.0))
    pde2 = fd_solve(asian(-1, horizon=5.0), COARSE)
    assert pde2.clipped_nodes == 0
    assert pde2.value < solution.value < 0.09


def test_short_horizon_payoff_is_not_clipped():
    solution = fd_solve(asian(1), COARSE)
    assert solution.clipped_nodes == 0
    assert solution.diagnostics()["payoff_cap"] > solution.a[-1] / 2.0 - 1.0


@pytest.mark.slow
def test_default_grid_is_converged():
    coarse = fd_solve(asian(1))
    fine = fd_solve(asian(1), FDGrid().refined())
    assert abs(coarse.value - fine.value) <= 0.0006
    assert fine.value == pytest.approx(0.0554, abs=0.0006)
