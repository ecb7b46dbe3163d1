"""Built-in catalog of path functionals.

Every entry is a frozen dataclass that evaluates on a DiscretePath, and additionally on the
Markov state (x, integral of x) of many particles at once through `batch`. Config files
refer to entries by strings such as ``call_on_average(strike=1.0)``.
"""

import ast
import re
from dataclasses import dataclass, fields, replace
from typing import Any, ClassVar

import numpy as np

from branchmc.core.errors import InputValidationError
from branchmc.core.model import DiscretePath, evaluate_path


class Functional:
    """Common behaviour of catalog entries."""

    name: ClassVar[str]
    kind: ClassVar[str]

    def reference(self) -> str:
        """Catalog string that parses back to an equal functional."""
        args = ", ".join(
            f"{f.name}={getattr(self, f.name)!r}"
            for f in fields(self)  # type: ignore[arg-type]
            if getattr(self, f.name) is not None
        )
        return f"{self.name}({args})"

    def __str__(self) -> str:
        return self.reference()


def _running_integral(t: float, path: DiscretePath) -> np.ndarray:
    return path.stopped(t).integral()


# ---------------------------------------------------------------------------
# Coefficients a_k(t, path)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant(Functional):
    value: float

    name: ClassVar[str] = "constant"
    kind: ClassVar[str] = "coefficient"

    @property
    def bound(self) -> float:
        return abs(self.value)

    def __call__(self, t: float, path: DiscretePath) -> float:
        return self.value

    def batch(self, t: np.ndarray, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return np.full(x.shape[0], float(self.value))


@dataclass(frozen=True)
class Coordinate(Functional):
    """Projection X^i_t."""

    index: int = 0

    name: ClassVar[str] = "coordinate"
    kind: ClassVar[str] = "coefficient"

    def __call__(self, t: float, path: DiscretePath) -> float:
        return float(evaluate_path(path, t)[self.index])

    def batch(self, t: np.ndarray, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return x[:, self.index]


@dataclass(frozen=True)
class RunningIntegral(Functional):
    """A^i_t, the trapezoidal integral of X^i over [0, t]."""

    index: int = 0

    name: ClassVar[str] = "running_integral"
    kind: ClassVar[str] = "coefficient"

    def __call__(self, t: float, path: DiscretePath) -> float:
        return float(_running_integral(t, path)[self.index])

    def batch(self, t: np.ndarray, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return integral[:, self.index]


@dataclass(frozen=True)
class BasketAverage(Functional):
    """Mean of the coordinates of X_t."""

    name: ClassVar[str] = "basket_average"
    kind: ClassVar[str] = "coefficient"

    def __call__(self, t: float, path: DiscretePath) -> float:
        return float(np.mean(evaluate_path(path, t)))

    def batch(self, t: np.ndarray, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return x.mean(axis=1)


# ---------------------------------------------------------------------------
# Payoffs psi(path)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantPayoff(Functional):
    value: float

    name: ClassVar[str] = "constant_payoff"
    kind: ClassVar[str] = "payoff"

    @property
    def bound(self) -> float:
        return abs(self.value)

    def __call__(self, path: DiscretePath) -> float:
        return self.value

    def batch(self, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return np.full(x.shape[0], float(self.value))


@dataclass(frozen=True)
class CallOnAverage(Functional):
    """(mean_i A^i_T / T - K)^+ : call on the basket of running averages."""

    strike: float = 1.0
    horizon: float | None = None

    name: ClassVar[str] = "call_on_average"
    kind: ClassVar[str] = "payoff"

    def _horizon(self) -> float:
        if self.horizon is None:
            raise InputValidationError("call_on_average needs a horizon")
        return self.horizon

    def __call__(self, path: DiscretePath) -> float:
        average = float(np.mean(path.integral())) / self._horizon()
        return max(average - self.strike, 0.0)

    def batch(self, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return np.maximum(integral.mean(axis=1) / self._horizon() - self.strike, 0.0)


@dataclass(frozen=True)
class CallOnBasket(Functional):
    """(mean_i X^i_T - K)^+."""

    strike: float = 1.0

    name: ClassVar[str] = "call_on_basket"
    kind: ClassVar[str] = "payoff"

    def __call__(self, path: DiscretePath) -> float:
        return max(float(np.mean(path.terminal)) - self.strike, 0.0)

    def batch(self, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return np.maximum(x.mean(axis=1) - self.strike, 0.0)


# ---------------------------------------------------------------------------
# Drift mu(t, path) and volatility sigma(t, path)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroDrift(Functional):
    name: ClassVar[str] = "zero"
    kind: ClassVar[str] = "drift"

    def __call__(self, t: float, path: DiscretePath) -> np.ndarray:
        return np.zeros(path.dim)

    def batch(self, t: np.ndarray, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)


@dataclass(frozen=True)
class LinearDrift(Functional):
    """mu(x) = rate * x."""

    rate: float = 0.0

    name: ClassVar[str] = "linear"
    kind: ClassVar[str] = "drift"

    def __call__(self, t: float, path: DiscretePath) -> np.ndarray:
        return self.rate * evaluate_path(path, t)

    def batch(self, t: np.ndarray, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        return self.rate * x


@dataclass(frozen=True)
class GeometricVol(Functional):
    """sigma(x) = sigma * diag(x): uncorrelated geometric Brownian motions."""

    sigma: float = 0.2

    name: ClassVar[str] = "gbm"
    kind: ClassVar[str] = "vol"

    def __call__(self, t: float, path: DiscretePath) -> np.ndarray:
        return np.diag(self.sigma * evaluate_path(path, t))

    def batch(self, t: np.ndarray, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        n, d = x.shape
        out = np.zeros((n, d, d))
        idx = np.arange(d)
        out[:, idx, idx] = self.sigma * x
        return out


@dataclass(frozen=True)
class ConstantVol(Functional):
    """sigma(x) = sigma * I: scaled Brownian motion."""

    sigma: float = 1.0

    name: ClassVar[str] = "brownian"
    kind: ClassVar[str] = "vol"

    def __call__(self, t: float, path: DiscretePath) -> np.ndarray:
        return self.sigma * np.eye(path.dim)

    def batch(self, t: np.ndarray, x: np.ndarray, integral: np.ndarray) -> np.ndarray:
        n, d = x.shape
        return np.broadcast_to(self.sigma * np.eye(d), (n, d, d))


CATALOG: dict[str, type[Functional]] = {
    cls.name: cls
    for cls in (
        Constant,
        Coordinate,
        RunningIntegral,
        BasketAverage,
        ConstantPayoff,
        CallOnAverage,
        CallOnBasket,
        ZeroDrift,
        LinearDrift,
        GeometricVol,
        ConstantVol,
    )
}

_REFERENCE = re.compile(r"^\s*([a-z_][a-z0-9_]*)\s*\((.*)\)\s*$", re.DOTALL)


def parse_functional(text: str, kind: str, **context: Any) -> Functional:
    """Parse a catalog reference such as ``gbm(sigma=0.2)``.

    `kind` restricts the entry type ("coefficient", "payoff", "drift", "vol"). Keyword
    arguments in `context` fill fields the reference leaves unset (e.g. horizon).
    """
    match = _REFERENCE.match(text)
    if match is None:
        raise InputValidationError(f"malformed functional reference: {text!r}")
    name, args = match.groups()
    cls = CATALOG.get(name)
    if cls is None:
        raise InputValidationError(f"unknown functional {name!r}; known: {sorted(CATALOG)}")
    if cls.kind != kind:
        raise InputValidationError(f"{name!r} is a {cls.kind} functional, expected {kind}")

    try:
        call = ast.parse(f"_({args})", mode="eval").body
        assert isinstance(call, ast.Call)
        if call.args:
            raise InputValidationError(f"{text!r}: use keyword arguments only")
        kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in call.keywords}
    except (SyntaxError, ValueError) as e:
        raise InputValidationError(f"cannot parse arguments of {text!r}: {e}") from e

    allowed = {f.name for f in fields(cls)}  # type: ignore[arg-type]
    unknown = set(kwargs) - allowed
    if unknown:
        raise InputValidationError(f"{name!r} has no parameter(s) {sorted(unknown)}")
    try:
        functional = cls(**kwargs)
    except TypeError as e:
        raise InputValidationError(f"{text!r}: {e}") from e

    fill = {
        key: value
        for key, value in context.items()
        if key in allowed and getattr(functional, key) is None
    }
    return replace(functional, **fill) if fill else functional  # type: ignore[type-var]


def supports_batch(*functionals: object) -> bool:
    """True when every functional can run in the vectorized engine."""
    return all(callable(getattr(f, "batch", None)) for f in functionals)
