"""Problem instance, discrete paths and the polynomial generator."""

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import trapezoid

from branchmc.core.errors import InputValidationError
from branchmc.utils.logger import get_logger

log = get_logger("model")

# Relative tolerance on the offspring law summing to one
PROBABILITY_TOLERANCE = 1e-12

# Spot-check factors applied to x0 when checking non-degeneracy of the volatility
NONDEGENERACY_SCALES = (0.75, 1.0, 1.25)


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Time grid plus one d-dimensional value per grid point.

    Evaluation between grid points is linear interpolation; outside the grid the nearest
    endpoint value is returned (the stopped-path convention).
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.array(self.grid, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(len(grid), -1) if len(grid) else values
        if grid.size == 0:
            raise InputValidationError("path must contain at least one grid point")
        if values.ndim != 2 or values.shape[0] != grid.size:
            raise InputValidationError(
                f"values shape {values.shape} does not match grid length {grid.size}"
            )
        if grid[0] < 0 or not np.all(np.diff(grid) > 0):
            raise InputValidationError("grid must be strictly increasing and start at t >= 0")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise InputValidationError("path grid and values must be finite")
        self._freeze(grid, values)

    def _freeze(self, grid: np.ndarray, values: np.ndarray) -> None:
        grid.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def trusted(cls, grid: np.ndarray, values: np.ndarray) -> "DiscretePath":
        """Build without validation; callers guarantee the invariants (hot Euler loop)."""
        path = object.__new__(cls)
        path._freeze(np.array(grid, dtype=float), np.array(values, dtype=float))
        return path

    @classmethod
    def constant(cls, value: Sequence[float] | np.ndarray, time: float = 0.0) -> "DiscretePath":
        """Single-point path holding `value` from `time` on."""
        return cls(np.array([time]), np.asarray(value, dtype=float).reshape(1, -1))

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @property
    def start(self) -> float:
        return float(self.grid[0])

    @property
    def end(self) -> float:
        return float(self.grid[-1])

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def __len__(self) -> int:
        return int(self.grid.size)

    def at(self, t: float) -> np.ndarray:
        """Interpolated value at t (see evaluate_path)."""
        return evaluate_path(self, t)

    def stopped(self, t: float) -> "DiscretePath":
        """The path restricted to [start, t]; t is inserted as a node when needed."""
        if t >= self.end:
            return self
        if t <= self.start:
            return DiscretePath.trusted(self.grid[:1], self.values[:1])
        i = int(np.searchsorted(self.grid, t, side="right"))
        if self.grid[i - 1] == t:
            return DiscretePath.trusted(self.grid[:i], self.values[:i])
        grid = np.append(self.grid[:i], t)
        values = np.vstack([self.values[:i], evaluate_path(self, t)])
        return DiscretePath.trusted(grid, values)

    def concat(self, other: "DiscretePath") -> "DiscretePath":
        """Join a continuation that starts at this path's last node."""
        if other.start != self.end:
            raise InputValidationError(
                f"continuation starts at {other.start} but path ends at {self.end}"
            )
        return DiscretePath.trusted(
            np.concatenate([self.grid, other.grid[1:]]),
            np.vstack([self.values, other.values[1:]]),
        )

    def integral(self) -> np.ndarray:
        """Trapezoidal integral of each coordinate over the path's own span."""
        if len(self) == 1:
            return np.zeros(self.dim)
        return trapezoid(self.values, self.grid, axis=0)

    def sup_distance(self, other: "DiscretePath") -> float:
        """Sup-norm distance evaluated on the union of both grids."""
        times = np.union1d(self.grid, other.grid)
        mine = np.array([self.at(t) for t in times])
        theirs = np.array([other.at(t) for t in times])
        return float(np.max(np.abs(mine - theirs)))


def evaluate_path(path: DiscretePath, t: float) -> np.ndarray:
    """Linear interpolation of the path at t, constant beyond either end.

    Exact grid hits return the stored value.
    """
    grid, values = path.grid, path.values
    if t <= grid[0]:
        return values[0].copy()
    if t >= grid[-1]:
        return values[-1].copy()
    i = int(np.searchsorted(grid, t, side="right")) - 1
    if grid[i] == t:
        return values[i].copy()
    w = (t - grid[i]) / (grid[i + 1] - grid[i])
    return values[i] + w * (values[i + 1] - values[i])


# aₖ(t, path) -> real
CoefficientFunctional = Callable[[float, DiscretePath], float]
# ψ(path) -> real
PayoffFunctional = Callable[[DiscretePath], float]
# μ(t, path) -> R^d
DriftFunctional = Callable[[float, DiscretePath], np.ndarray]
# σ(t, path) -> R^{d x d}
VolFunctional = Callable[[float, DiscretePath], np.ndarray]


def default_offspring(coeff_bounds: Sequence[float]) -> tuple[float, ...]:
    """Offspring law proportional to the declared coefficient bounds."""
    bounds = np.asarray(coeff_bounds, dtype=float)
    total = bounds.sum()
    if total == 0:
        p = np.zeros_like(bounds)
        p[0] = 1.0
        return tuple(float(x) for x in p)
    return tuple(float(x) for x in bounds / total)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A full problem instance: diffusion, nonlinearity, payoff and offspring law."""

    dim: int
    horizon: float
    beta: float
    coeffs: tuple[CoefficientFunctional, ...]
    coeff_bounds: tuple[float, ...]
    payoff: PayoffFunctional
    payoff_bound: float
    drift: DriftFunctional
    vol: VolFunctional
    x0: np.ndarray
    offspring: tuple[float, ...] | None = None
    nondegeneracy: float = 0.0
    name: str = "problem"

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InputValidationError(f"dim must be positive, got {self.dim}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise InputValidationError(f"horizon must be positive, got {self.horizon}")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise InputValidationError(f"beta must be non-negative, got {self.beta}")
        if len(self.coeffs) == 0 or len(self.coeffs) != len(self.coeff_bounds):
            raise InputValidationError(
                f"need one declared bound per coefficient "
                f"({len(self.coeffs)} coefficients, {len(self.coeff_bounds)} bounds)"
            )
        if any(b < 0 for b in self.coeff_bounds) or self.payoff_bound < 0:
            raise InputValidationError("declared bounds must be non-negative")

        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.size != self.dim:
            raise InputValidationError(f"x0 has {x0.size} coordinates, expected {self.dim}")
        x0.flags.writeable = False
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        object.__setattr__(self, "coeff_bounds", tuple(float(b) for b in self.coeff_bounds))

        offspring = self.offspring
        if offspring is None:
            offspring = default_offspring(self.coeff_bounds)
        object.__setattr__(self, "offspring", self._check_offspring(offspring))
        self._check_coefficients()

    def _check_offspring(self, offspring: Sequence[float]) -> tuple[float, ...]:
        p = np.asarray(offspring, dtype=float)
        if p.size != len(self.coeffs):
            raise InputValidationError(
                f"offspring law has {p.size} entries, expected {len(self.coeffs)}"
            )
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROBABILITY_TOLERANCE * p.size:
            raise InputValidationError(f"offspring law {tuple(p)} is not a probability vector")
        for k, (pk, bound) in enumerate(zip(p, self.coeff_bounds, strict=True)):
            if bound != 0 and pk == 0:
                raise InputValidationError(f"p_{k} must be positive since |a_{k}|_0 = {bound}")
        return tuple(float(x) for x in p)

    def _check_coefficients(self) -> None:
        start = DiscretePath.constant(self.x0)
        mu = np.asarray(self.drift(0.0, start), dtype=float)
        if mu.shape != (self.dim,):
            raise InputValidationError(f"drift returned shape {mu.shape}, expected ({self.dim},)")
        if self.nondegeneracy <= 0:
            log.debug(f"{self.name}: non-degeneracy spot check disabled")
            return
        for factor in NONDEGENERACY_SCALES:
            path = DiscretePath.constant(self.x0 * factor)
            sigma = np.asarray(self.vol(0.0, path), dtype=float)
            if sigma.shape != (self.dim, self.dim):
                raise InputValidationError(
                    f"vol returned shape {sigma.shape}, expected ({self.dim}, {self.dim})"
                )
            smallest = float(np.linalg.eigvalsh(sigma @ sigma.T).min())
            if smallest < self.nondegeneracy * (1 - 1e-12):
                raise InputValidationError(
                    f"sigma sigma^T has eigenvalue {smallest:.3g} below declared "
                    f"c0={self.nondegeneracy:.3g} at x={self.x0 * factor}"
                )

    @property
    def n0(self) -> int:
        """Highest power of the polynomial nonlinearity."""
        return len(self.coeffs) - 1

    @property
    def offspring_law(self) -> np.ndarray:
        assert self.offspring is not None
        return np.asarray(self.offspring, dtype=float)

    def coefficient_values(self, t: float, path: DiscretePath) -> np.ndarray:
        """(a_0(t, path), ..., a_n0(t, path))."""
        return np.array([float(a(t, path)) for a in self.coeffs])

    def initial_path(self) -> DiscretePath:
        return DiscretePath.constant(self.x0)


def generator_value(spec: ProblemSpec, t: float, path: DiscretePath, y: float) -> float:
    """F(t, path, y) = beta * (sum_k a_k(t, path) y^k - y), Horner evaluation."""
    return spec.beta * (float(P.polyval(y, spec.coefficient_values(t, path))) - y)
