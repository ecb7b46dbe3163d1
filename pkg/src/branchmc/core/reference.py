"""Independent oracles: closed-form constant-payoff values and an explicit FD solver.

The FD solver handles the Markovian pricing PDE in (x, a), a = running integral of x:

    v_t + x v_a + 1/2 sigma^2 x^2 v_xx + beta (sign * v^2 - v) = 0,   v(T, x, a) = psi(x, a)

Each backward step is explicit Euler for the reaction and x-diffusion followed by a
separate Beam-Warming step for the transport in a. Unbounded payoffs are clipped below the
level at which the reaction alone explodes before the horizon.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from branchmc.core.errors import InputValidationError, UnstableGrid
from branchmc.utils.logger import get_logger

log = get_logger("reference")

# Fraction of the stability limit used when the time step count is chosen automatically
CFL_SAFETY = 0.9
# Time step used on a degenerate (single node) spatial grid
DEGENERATE_DT = 2e-5
# Terminal data is clipped at this fraction of the reaction blow-up level
REACTION_CAP_FRACTION = 0.8


def _check_sign(sign: int) -> None:
    if sign not in (1, -1):
        raise InputValidationError(f"sign must be +1 or -1, got {sign}")


def constant_payoff_solution(
    beta: float, horizon: float, sign: int, value: float = 0.5
) -> float:
    """v(0) for psi == value and nonlinearity sign * y^2.

    1/v solves a linear ODE: 1/v(0) = sign + (1/value - sign) e^(beta T).
    """
    _check_sign(sign)
    if value == 0:
        return 0.0
    return 1.0 / (sign + (1.0 / value - sign) * math.exp(beta * horizon))


def bernoulli_rho(psi_bound: float, beta: float, t: np.ndarray | float) -> np.ndarray:
    """Closed form of rho' = beta(psi rho^2 - rho), rho(0) = 1."""
    return 1.0 / (psi_bound + (1.0 - psi_bound) * np.exp(beta * np.asarray(t, dtype=float)))


def reaction_ceiling(beta: float, horizon: float) -> float:
    """Blow-up level of the reaction v' = beta(v^2 - v) over the horizon.

    With F = sign * y^2 the product sign * v follows that ODE, so it bounds sign * psi.
    """
    if beta == 0:
        return math.inf
    return 1.0 / -math.expm1(-beta * horizon)


Payoff2D = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FDProblem:
    sigma: float
    beta: float
    sign: int
    payoff: Payoff2D
    horizon: float
    x0: float = 1.0

    def __post_init__(self) -> None:
        _check_sign(self.sign)
        if self.horizon <= 0 or self.sigma < 0 or self.beta < 0 or self.x0 < 0:
            raise InputValidationError("FD problem needs horizon > 0 and sigma, beta, x0 >= 0")


@dataclass(frozen=True)
class FDGrid:
    """Node counts per axis plus optional overrides of the box and the time step count.

    Defaults place x_max = x0 e^(4 sigma sqrt(T)) and a_max = T x_max.
    """

    x_nodes: int = 201
    a_nodes: int = 401
    time_steps: int | None = None
    x_max: float | None = None
    a_max: float | None = None

    def refined(self) -> "FDGrid":
        """Halved spacing on both axes; the step count is re-derived from stability."""
        return FDGrid(
            x_nodes=2 * self.x_nodes - 1 if self.x_nodes > 1 else 1,
            a_nodes=2 * self.a_nodes - 1 if self.a_nodes > 1 else 1,
            time_steps=None,
            x_max=self.x_max,
            a_max=self.a_max,
        )


@dataclass(frozen=True)
class FDSolution:
    value: float
    x: np.ndarray
    a: np.ndarray
    surface: np.ndarray
    time_steps: int
    dt: float
    payoff_cap: float = math.inf
    clipped_nodes: int = 0

    def diagnostics(self) -> dict[str, Any]:
        return {
            "x_nodes": self.x.size,
            "a_nodes": self.a.size,
            "x_max": float(self.x[-1]),
            "a_max": float(self.a[-1]),
            "time_steps": self.time_steps,
            "dt": self.dt,
            "payoff_cap": self.payoff_cap,
            "clipped_nodes": self.clipped_nodes,
        }


def _axis(nodes: int, upper: float, anchor: float) -> np.ndarray:
    if nodes < 1:
        raise InputValidationError(f"need at least one node per axis, got {nodes}")
    if nodes == 1:
        return np.array([anchor])
    return np.linspace(0.0, upper, nodes)


def _stability_limit(problem: FDProblem, x: np.ndarray, a: np.ndarray) -> float:
    """Explicit step bound 1 / (beta + sigma^2 x_max^2 / dx^2 + x_max / da)."""
    rate = problem.beta
    x_max = float(x[-1])
    if x.size > 1:
        dx = x[1] - x[0]
        rate += problem.sigma**2 * x_max**2 / dx**2
    if a.size > 1:
        da = a[1] - a[0]
        rate += x_max / da
    return math.inf if rate == 0 else 1.0 / rate


def _interpolate(x: np.ndarray, a: np.ndarray, surface: np.ndarray, x0: float) -> float:
    if x.size == 1 and a.size == 1:
        return float(surface[0, 0])
    if x.size == 1:
        return float(np.interp(0.0, a, surface[0]))
    if a.size == 1:
        return float(np.interp(x0, x, surface[:, 0]))
    return float(RegularGridInterpolator((x, a), surface)([[x0, 0.0]])[0])


def _transport(v: np.ndarray, courant: np.ndarray) -> np.ndarray:
    """One explicit step of v_tau = x v_a, information flowing from larger a.

    Beam-Warming (second order, one-sided) in the interior; first order on the last two
    columns, with v_a extrapolated at a_max.
    """
    out = np.empty_like(v)
    if v.shape[1] > 2:
        v0, v1, v2 = v[:, :-2], v[:, 1:-1], v[:, 2:]
        out[:, :-2] = 0.5 * courant * (-3.0 * v0 + 4.0 * v1 - v2) + 0.5 * courant**2 * (
            v0 - 2.0 * v1 + v2
        )
    slope = v[:, -1] - v[:, -2]
    out[:, -2] = courant[:, 0] * slope
    out[:, -1] = courant[:, 0] * slope
    return out


def fd_solve(problem: FDProblem, grid: FDGrid | None = None) -> FDSolution:
    """Backward explicit Euler; returns the interpolated value at (x0, a=0)."""
    grid = grid or FDGrid()
    horizon = problem.horizon
    x_max = grid.x_max or problem.x0 * math.exp(4.0 * problem.sigma * math.sqrt(horizon))
    a_max = grid.a_max or horizon * x_max
    x = _axis(grid.x_nodes, x_max, problem.x0)
    a = _axis(grid.a_nodes, a_max, 0.0)
    if x.size > 1 and problem.x0 > x_max:
        raise InputValidationError(f"x0={problem.x0} lies outside [0, {x_max}]")

    limit = _stability_limit(problem, x, a)
    if grid.time_steps is None:
        if x.size == 1 and a.size == 1:
            steps = max(1, math.ceil(horizon / DEGENERATE_DT))
        else:
            steps = max(1, math.ceil(horizon / (CFL_SAFETY * limit)))
    else:
        steps = grid.time_steps
    dt = horizon / steps
    if dt > limit:
        raise UnstableGrid(
            f"time step {dt:.3g} exceeds the explicit stability limit {limit:.3g}; "
            f"use at least {math.ceil(horizon / limit)} steps"
        )

    xx, aa = np.meshgrid(x, a, indexing="ij")
    v = np.asarray(problem.payoff(xx, aa), dtype=float).copy()
    if v.shape != xx.shape:
        raise InputValidationError(f"payoff returned shape {v.shape}, expected {xx.shape}")

    # sign * v stays below the ODE solution started from the cap
    cap = REACTION_CAP_FRACTION * reaction_ceiling(problem.beta, horizon)
    clipped = int(np.count_nonzero(problem.sign * v > cap))
    if clipped:
        log.info(f"FD solve: clipped {clipped} terminal nodes at sign * psi = {cap:.4g}")
        v = problem.sign * np.minimum(problem.sign * v, cap)

    diffusion = 0.5 * problem.sigma**2 * x[:, None] ** 2
    dx = x[1] - x[0] if x.size > 1 else 1.0
    da = a[1] - a[0] if a.size > 1 else 1.0
    courant = x[:, None] * dt / da
    log.debug(f"FD solve: {x.size}x{a.size} nodes, {steps} steps of {dt:.3g}")

    for _ in range(steps):
        rhs = problem.beta * (problem.sign * v**2 - v)
        if x.size > 2:
            v_xx = np.zeros_like(v)
            v_xx[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx**2
            rhs += diffusion * v_xx
        v = v + dt * rhs
        if a.size > 1:
            v = v + _transport(v, courant)

    if not np.all(np.isfinite(v)):
        raise UnstableGrid("finite-difference solution became non-finite")
    value = _interpolate(x, a, v, problem.x0)
    return FDSolution(
        value=value,
        x=x,
        a=a,
        surface=v,
        time_steps=steps,
        dt=dt,
        payoff_cap=cap,
        clipped_nodes=clipped,
    )


def average_call_payoff(horizon: float, strike: float = 1.0) -> Payoff2D:
    """psi(x, a) = (a / T - K)^+ on the (x, a) grid."""

    def payoff(x: np.ndarray, a: np.ndarray) -> np.ndarray:
        return np.maximum(a / horizon - strike, 0.0)

    return payoff


def constant_payoff(value: float) -> Payoff2D:
    def payoff(x: np.ndarray, a: np.ndarray) -> np.ndarray:
        return np.full(np.broadcast(x, a).shape, float(value))

    return payoff
