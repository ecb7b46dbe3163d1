"""Comparison function, well-posedness classification and the rho ODE.

The comparison function is
    ell(s) = beta * (sum_k |a_k|_0 |psi|_0^(k-1) s^k - s)
and the problem is certified when rho' = ell(rho), rho(0) = 1, stays bounded on [0, T].
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad, solve_ivp
from scipy.optimize import bisect, brentq

from branchmc.core.errors import InputValidationError, ZeroPsiBound
from branchmc.core.model import DiscretePath, ProblemSpec
from branchmc.utils.logger import get_logger

log = get_logger("feasibility")

DEFAULT_BLOW_UP_CAP = 1e6
ROOT_XTOL = 1e-12
ODE_RTOL = 1e-9
ODE_ATOL = 1e-12
RHO_POINTS = 1001

# Imaginary parts below this count as real roots
_REAL_ROOT_TOL = 1e-9
# Doubling steps when bracketing the level point of the (l3) quadrature
_MAX_BRACKET_DOUBLINGS = 200


class Classification(Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    INFEASIBLE = "INFEASIBLE"


class VarianceVerdict(Enum):
    FINITE = "FINITE"
    UNCERTIFIED = "UNCERTIFIED"


@dataclass(frozen=True)
class BlowUp:
    """rho left every bounded region before the horizon."""

    time: float
    value: float
    trajectory: DiscretePath


@dataclass(frozen=True)
class EllAnalysis:
    ell0_coeffs: tuple[float, ...]
    psi_bound: float
    beta: float
    horizon: float
    classification: Classification
    critical_point: float | None
    blow_up_time: float | None
    rho_trajectory: DiscretePath
    r0: float

    @property
    def feasible(self) -> bool:
        return self.classification is not Classification.INFEASIBLE

    @property
    def rho_T(self) -> float:
        return float(self.rho_trajectory.terminal[0])

    def to_key_values(self) -> dict[str, Any]:
        return {
            "classification": self.classification.value,
            "critical_point": self.critical_point,
            "blow_up_time": self.blow_up_time,
            "psi_bound": self.psi_bound,
            "beta": self.beta,
            "horizon": self.horizon,
            "rho_T": self.rho_T if self.feasible else float("inf"),
            "r0": self.r0,
        }


def _ell_polynomial(weights: np.ndarray, beta: float) -> Polynomial:
    """beta * (sum_k weights[k] s^k - s)."""
    coef = np.zeros(max(len(weights), 2))
    coef[: len(weights)] = weights
    coef[1] -= 1.0
    return Polynomial(beta * coef)


def _psi_bound(spec: ProblemSpec, psi_shift: float | None) -> float:
    if psi_shift is not None and psi_shift <= 0:
        raise InputValidationError(f"psi_shift must be positive, got {psi_shift}")
    psi = spec.payoff_bound + (psi_shift or 0.0)
    if psi <= 0:
        raise ZeroPsiBound()
    return psi


def build_ell(spec: ProblemSpec, psi_bound: float | None = None) -> Polynomial:
    """The comparison polynomial ell(s) of `spec`.

    `psi_bound` overrides the declared |psi|_0 (used for explicitly shifted bounds).
    """
    psi = spec.payoff_bound if psi_bound is None else psi_bound
    if psi <= 0:
        raise ZeroPsiBound()
    bounds = np.asarray(spec.coeff_bounds, dtype=float)
    weights = bounds * psi ** (np.arange(bounds.size) - 1.0)
    return _ell_polynomial(weights, spec.beta)


def _smallest_root_above_one(ell: Polynomial) -> float | None:
    if ell.degree() < 1 or not np.any(ell.coef):
        return None
    roots = ell.roots()
    real = np.sort(roots[np.abs(roots.imag) < _REAL_ROOT_TOL].real)
    candidates = real[real > 1.0]
    if candidates.size == 0:
        return None
    r = float(candidates[0])
    # refine on a bracket; a tangential root has no sign change and is kept as found
    width = 1e-6 * max(1.0, r)
    lo, hi = max(1.0, r - width), r + width
    if ell(lo) > 0 and ell(hi) < 0:
        r = float(bisect(ell, lo, hi, xtol=ROOT_XTOL))
    return r


def _reciprocal(ell: Polynomial):
    return lambda s: 1.0 / ell(s)


def _blow_up_horizon(ell: Polynomial) -> float:
    """integral of 1/ell over [1, inf); infinite for at most linear growth."""
    if ell.degree() <= 1:
        return float("inf")
    value, _ = quad(_reciprocal(ell), 1.0, np.inf, limit=200)
    return float(value)


def _level_point(ell: Polynomial, horizon: float) -> float:
    """s with integral_1^s 1/ell = horizon."""

    def excess(s: float) -> float:
        return quad(_reciprocal(ell), 1.0, s, limit=200)[0] - horizon

    hi = 2.0
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        if excess(hi) > 0:
            return float(brentq(excess, 1.0, hi, xtol=ROOT_XTOL))
        hi *= 2.0
    raise ArithmeticError(f"no level point for horizon {horizon} below s={hi:.3g}")


def _classify_ell(
    ell: Polynomial, horizon: float
) -> tuple[Classification, float | None, float | None]:
    """(classification, critical point, blow-up horizon) from ell alone."""
    if ell(1.0) <= 0:
        return Classification.L1, None, None
    s_hat = _smallest_root_above_one(ell)
    if s_hat is not None:
        return Classification.L2, s_hat, None
    t_max = _blow_up_horizon(ell)
    if t_max <= horizon:
        return Classification.INFEASIBLE, None, t_max
    return Classification.L3, _level_point(ell, horizon), None


def integrate_rho(
    ell: Polynomial,
    horizon: float,
    blow_up_cap: float = DEFAULT_BLOW_UP_CAP,
    n_points: int = RHO_POINTS,
) -> DiscretePath | BlowUp:
    """Adaptive RK45 solution of rho' = ell(rho), rho(0) = 1 on [0, horizon]."""

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return ell(y)

    def cap_reached(t: float, y: np.ndarray) -> float:
        return float(y[0] - blow_up_cap)

    cap_reached.terminal = True  # type: ignore[attr-defined]
    cap_reached.direction = 1  # type: ignore[attr-defined]

    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            rhs,
            (0.0, horizon),
            [1.0],
            method="RK45",
            rtol=ODE_RTOL,
            atol=ODE_ATOL,
            dense_output=True,
            events=cap_reached,
        )

    if sol.status == 1 or sol.status == -1:
        t_stop = float(sol.t_events[0][0]) if sol.status == 1 else float(sol.t[-1])
        value = float(sol.y[0, -1])
        log.debug(f"rho blew up at t={t_stop:.6g} (value {value:.3g}, solver: {sol.message})")
        grid = np.linspace(0.0, t_stop, n_points) if t_stop > 0 else np.array([0.0])
        values = sol.sol(grid).T if sol.sol is not None else np.ones((grid.size, 1))
        finite = np.all(np.isfinite(values), axis=1)
        return BlowUp(t_stop, value, DiscretePath(grid[finite], values[finite]))

    grid = np.linspace(0.0, horizon, n_points)
    values = sol.sol(grid).T
    return DiscretePath(grid, values)


def _analyse(
    bounds: np.ndarray,
    psi: float,
    beta: float,
    horizon: float,
    blow_up_cap: float | None,
) -> EllAnalysis:
    weights = bounds * psi ** (np.arange(bounds.size) - 1.0)
    ell = _ell_polynomial(weights, beta)
    classification, critical, t_max = _classify_ell(ell, horizon)

    cap = blow_up_cap or DEFAULT_BLOW_UP_CAP * max(1.0, critical or 1.0)
    rho = integrate_rho(ell, horizon, cap)

    if isinstance(rho, BlowUp):
        if classification is not Classification.INFEASIBLE:
            log.warning(
                f"quadrature classified {classification.value} but rho blew up at "
                f"t={rho.time:.6g}; treating as infeasible"
            )
        return EllAnalysis(
            ell0_coeffs=tuple(float(b) for b in bounds),
            psi_bound=psi,
            beta=beta,
            horizon=horizon,
            classification=Classification.INFEASIBLE,
            critical_point=None,
            blow_up_time=rho.time if t_max is None else t_max,
            rho_trajectory=rho.trajectory,
            r0=float("inf"),
        )

    rho_max = float(np.max(rho.values))
    if classification is Classification.INFEASIBLE:
        log.warning(
            f"quadrature blow-up horizon {t_max:.6g} <= T={horizon:.6g} but rho stayed "
            f"below {cap:.3g}; treating as L3"
        )
        classification, critical = Classification.L3, rho_max
    if classification is Classification.L2 and critical is not None:
        rho_max = min(rho_max, critical)

    return EllAnalysis(
        ell0_coeffs=tuple(float(b) for b in bounds),
        psi_bound=psi,
        beta=beta,
        horizon=horizon,
        classification=classification,
        critical_point=critical,
        blow_up_time=None,
        rho_trajectory=rho,
        r0=psi * rho_max,
    )


def classify(
    spec: ProblemSpec,
    psi_shift: float | None = None,
    blow_up_cap: float | None = None,
) -> EllAnalysis:
    """Classify the problem as L1/L2/L3/INFEASIBLE and certify R0 = |psi|_0 max rho.

    `psi_shift` adds an explicit epsilon to the payoff bound (needed when psi == 0).
    """
    psi = _psi_bound(spec, psi_shift)
    analysis = _analyse(
        np.asarray(spec.coeff_bounds, dtype=float), psi, spec.beta, spec.horizon, blow_up_cap
    )
    log.debug(
        f"{spec.name}: {analysis.classification.value}, R0={analysis.r0:.6g}, "
        f"critical={analysis.critical_point}"
    )
    return analysis


def stability_margin(spec: ProblemSpec, eps: float) -> EllAnalysis:
    """Analysis of the problem with every bound inflated by a factor (1 + eps)."""
    if eps < 0:
        raise InputValidationError(f"eps must be non-negative, got {eps}")
    psi = _psi_bound(spec, None) * (1.0 + eps)
    bounds = np.asarray(spec.coeff_bounds, dtype=float) * (1.0 + eps)
    return _analyse(bounds, psi, spec.beta, spec.horizon, None)


def _variance_weights(spec: ProblemSpec, psi: float, exponent_shift: float) -> np.ndarray:
    bounds = np.asarray(spec.coeff_bounds, dtype=float)
    p = spec.offspring_law
    k = np.arange(bounds.size)
    weights = np.zeros_like(bounds)
    used = p > 0
    weights[used] = bounds[used] ** 2 / p[used] * psi ** (2.0 * k[used] - exponent_shift)
    return weights


def variance_radius_check(spec: ProblemSpec, psi_shift: float | None = None) -> VarianceVerdict:
    """FINITE when ell_v(s) = beta(sum (|a_k|^2/p_k)|psi|^(2k-1) s^k - s) is feasible."""
    psi = _psi_bound(spec, psi_shift)
    ell_v = _ell_polynomial(_variance_weights(spec, psi, 1.0), spec.beta)
    classification, _, _ = _classify_ell(ell_v, spec.horizon)
    if classification is Classification.INFEASIBLE:
        return VarianceVerdict.UNCERTIFIED
    return VarianceVerdict.FINITE


def variance_bound(spec: ProblemSpec, psi_shift: float | None = None) -> float:
    """Upper bound on E[Psi^2] from the second-moment ODE; inf when it blows up.

    With u = E[Psi^2] / |psi|_0^2 the moments satisfy
    u' <= beta(sum (|a_k|^2/p_k)|psi|^(2k-2) u^k - u), u(0) = 1.
    """
    psi = _psi_bound(spec, psi_shift)
    ell_m = _ell_polynomial(_variance_weights(spec, psi, 2.0), spec.beta)
    u = integrate_rho(ell_m, spec.horizon)
    if isinstance(u, BlowUp):
        return float("inf")
    return psi**2 * float(u.terminal[0])
