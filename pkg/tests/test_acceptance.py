"""Full-size reproduction runs; deselected by default, run with `pytest -m slow`."""

import math

import pytest

from branchmc.core.estimator import estimate
from branchmc.core.experiments import (
    asian_basket_problem,
    benchmark,
    constant_payoff_problem,
    run_table,
)
from branchmc.core.reference import FDGrid, constant_payoff_solution

pytestmark = pytest.mark.slow


@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("horizon", [2.0, 5.0])
def test_constant_payoff_at_full_size(sign, horizon):
    report = estimate(constant_payoff_problem(4, horizon, sign), samples=2**20, seed=11)
    expected = constant_payoff_solution(0.1, horizon, sign)
    assert abs(report.mean - expected) <= 3 * report.std_error


@pytest.mark.parametrize(
    "table_id, pde1, pde2, descendants",
    [
        (1, (5.51, 5.57), (5.14, 5.20), math.exp(0.2)),
        (2, (7.20, 7.28), (5.47, 5.55), math.exp(0.5)),
        (3, (2.71, 2.77), (2.62, 2.68), math.exp(0.2)),
        (4, (3.35, 3.41), (2.97, 3.03), math.exp(0.5)),
    ],
)
def test_price_tables(table_id, pde1, pde2, descendants):
    table = run_table(table_id, n_min=22, n_max=22)
    row = table.iloc[-1]
    assert pde1[0] <= row["fair_pde1_pct"] <= pde1[1]
    assert pde2[0] <= row["fair_pde2_pct"] <= pde2[1]
    assert row["stdev_pde1_pct"] <= 0.015
    assert table.attrs["mean_alive"][-1] == pytest.approx(descendants, rel=0.02)


@pytest.mark.parametrize(
    "dim, horizon, price",
    [(1, 2.0, 6.52), (1, 5.0, 10.24), (4, 2.0, 3.29), (4, 5.0, 5.24)],
)
def test_linear_limit(dim, horizon, price):
    report = estimate(asian_basket_problem(dim, horizon, beta=0.0), samples=2**22, seed=13)
    # quoted prices carry two decimals
    assert abs(100 * report.mean - price) <= 3 * 100 * report.std_error + 0.005


@pytest.mark.parametrize(
    "name, price",
    [("pde1-T2", 5.54), ("pde2-T2", 5.17), ("pde1-T5", 7.24), ("pde2-T5", 5.51)],
)
def test_fd_oracle(name, price):
    coarse = benchmark(name)["value_pct"]
    fine = benchmark(name, FDGrid().refined())["value_pct"]
    assert abs(coarse - fine) <= 0.06
    assert fine == pytest.approx(price, abs=0.06)

