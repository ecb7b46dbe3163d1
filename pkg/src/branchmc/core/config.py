"""Run configuration loader.

A run file is a YAML document with three sections:

    problem:
      dim: 1
      horizon: 2.0
      beta: 0.1
      x0: 1.0
      vol: gbm(sigma=0.2)
      coeffs: [0.0, 0.0, 1.0]
      payoff: call_on_average(strike=1.0)
      payoff_bound: 1.0
    run:
      samples_log2: 16
      seed: 0
    output:
      csv: result.csv
"""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from branchmc.core.branching import DEFAULT_POPULATION_CAP
from branchmc.core.errors import InputValidationError
from branchmc.core.estimator import DEFAULT_BATCH_SIZE, ENGINES
from branchmc.core.functionals import Constant, parse_functional
from branchmc.core.model import ProblemSpec
from branchmc.utils.logger import VERBOSITY_LEVELS


def _floats(value: Any, what: str) -> tuple[float, ...] | None:
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return (float(value),)
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError) as e:
        raise InputValidationError(f"{what} must be a list of numbers: {e}") from e


@dataclass(frozen=True)
class ProblemSection:
    """Problem data with functionals given as catalog references."""

    dim: int
    horizon: float
    beta: float
    coeffs: tuple[float | str, ...]
    payoff: str
    x0: tuple[float, ...] = (1.0,)
    drift: str = "zero()"
    vol: str = "gbm(sigma=0.2)"
    nondegeneracy: float = 0.0
    coeff_bounds: tuple[float, ...] | None = None
    payoff_bound: float | None = None
    offspring: tuple[float, ...] | None = None
    name: str = "problem"

    def __post_init__(self) -> None:
        x0 = _floats(self.x0, "x0") or ()
        if len(x0) == 1 and self.dim > 1:
            x0 = x0 * self.dim
        object.__setattr__(self, "x0", x0)
        coeffs = self.coeffs if isinstance(self.coeffs, (list, tuple)) else (self.coeffs,)
        object.__setattr__(
            self,
            "coeffs",
            tuple(c if isinstance(c, str) else float(c) for c in coeffs),
        )
        object.__setattr__(self, "coeff_bounds", _floats(self.coeff_bounds, "coeff_bounds"))
        object.__setattr__(self, "offspring", _floats(self.offspring, "offspring"))

    def build(self) -> ProblemSpec:
        coeffs = [
            Constant(c) if isinstance(c, float) else parse_functional(c, "coefficient")
            for c in self.coeffs
        ]
        if self.coeff_bounds is not None:
            bounds = self.coeff_bounds
        else:
            missing = [i for i, c in enumerate(coeffs) if not hasattr(c, "bound")]
            if missing:
                raise InputValidationError(
                    f"coeff_bounds must be declared (coefficients {missing} are not constant)"
                )
            bounds = tuple(c.bound for c in coeffs)  # type: ignore[attr-defined]

        payoff = parse_functional(self.payoff, "payoff", horizon=self.horizon)
        payoff_bound = self.payoff_bound
        if payoff_bound is None:
            if not hasattr(payoff, "bound"):
                raise InputValidationError(f"payoff_bound must be declared for {self.payoff}")
            payoff_bound = payoff.bound

        return ProblemSpec(
            dim=self.dim,
            horizon=self.horizon,
            beta=self.beta,
            coeffs=tuple(coeffs),  # type: ignore[arg-type]
            coeff_bounds=bounds,
            payoff=payoff,  # type: ignore[arg-type]
            payoff_bound=payoff_bound,
            drift=parse_functional(self.drift, "drift"),  # type: ignore[arg-type]
            vol=parse_functional(self.vol, "vol"),  # type: ignore[arg-type]
            x0=self.x0,  # type: ignore[arg-type]
            offspring=self.offspring,
            nondegeneracy=self.nondegeneracy,
            name=self.name,
        )


@dataclass(frozen=True)
class RunSection:
    samples_log2: int = 16
    dt: float | None = None
    seed: int = 0
    threads: int | None = None
    engine: str = "auto"
    population_cap: int = DEFAULT_POPULATION_CAP
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self) -> None:
        if not 1 <= self.samples_log2 <= 40:
            raise InputValidationError(f"samples_log2 must lie in 1..40, got {self.samples_log2}")
        if self.engine not in ENGINES:
            raise InputValidationError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.seed < 0:
            raise InputValidationError(f"seed must be non-negative, got {self.seed}")

    @property
    def samples(self) -> int:
        return 2**self.samples_log2


@dataclass(frozen=True)
class OutputSection:
    csv: str | None = None
    verbosity: str = "info"
    dump_trees: str | None = None
    dump_paths: str | None = None

    def __post_init__(self) -> None:
        if self.verbosity not in VERBOSITY_LEVELS:
            raise InputValidationError(
                f"verbosity must be one of {sorted(VERBOSITY_LEVELS)}, got {self.verbosity!r}"
            )


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSection
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        if not isinstance(data, dict):
            raise InputValidationError("run configuration must be a mapping")
        _reject_unknown(data, {"problem", "run", "output"}, "top level")
        if "problem" not in data:
            raise InputValidationError("run configuration needs a 'problem' section")
        return cls(
            problem=_section(ProblemSection, data["problem"], "problem"),
            run=_section(RunSection, data.get("run") or {}, "run"),
            output=_section(OutputSection, data.get("output") or {}, "output"),
        )

    def to_dict(self) -> dict[str, Any]:
        def plain(section: Any) -> dict[str, Any]:
            return {
                key: list(value) if isinstance(value, tuple) else value
                for key, value in asdict(section).items()
            }

        return {
            "problem": plain(self.problem),
            "run": plain(self.run),
            "output": plain(self.output),
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Replace run/output keys given by name; None values are ignored."""
        run_keys = {f.name for f in fields(RunSection)}
        output_keys = {f.name for f in fields(OutputSection)}
        _reject_unknown(overrides, run_keys | output_keys, "overrides")
        run = {k: v for k, v in overrides.items() if k in run_keys and v is not None}
        output = {k: v for k, v in overrides.items() if k in output_keys and v is not None}
        return replace(self, run=replace(self.run, **run), output=replace(self.output, **output))


def _reject_unknown(data: dict[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise InputValidationError(f"unknown key(s) in {where}: {', '.join(map(str, unknown))}")


def _section(cls: type, data: Any, where: str) -> Any:
    if not isinstance(data, dict):
        raise InputValidationError(f"section '{where}' must be a mapping")
    _reject_unknown(data, {f.name for f in fields(cls)}, where)
    try:
        return cls(**data)
    except TypeError as e:
        raise InputValidationError(f"section '{where}': {e}") from e


def load_run_config(config_path: str | Path) -> RunConfig:
    """Load a run configuration from a YAML file."""
    config_path = Path(config_path)

    if not config_path.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(config_path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise InputValidationError(f"{config_path}: {e}") from e

    return RunConfig.from_dict(data)


def save_run_config(config: RunConfig, config_path: str | Path) -> None:
    with open(config_path, "w") as f:
        f.write(config.to_yaml())
