from pathlib import Path

import pytest
import yaml

from branchmc.core.config import RunConfig, load_run_config, save_run_config
from branchmc.core.errors import InputValidationError
from branchmc.core.functionals import CallOnAverage, ConstantPayoff, GeometricVol

ROOT = Path(__file__).resolve().parents[1]


def minimal(**problem) -> dict:
    base = {
        "dim": 1,
        "horizon": 2.0,
        "beta": 0.1,
        "coeffs": [0.0, 0.0, 1.0],
        "payoff": "constant_payoff(value=0.5)",
    }
    return {"problem": base | problem}


def test_example_configs_build():
    asian = load_run_config(ROOT / "asian_pde1.yaml")
    spec = asian.problem.build()
    assert spec.payoff == CallOnAverage(strike=1.0, horizon=2.0)
    assert spec.vol == GeometricVol(0.2)
    assert spec.payoff_bound == 1.0
    assert spec.coeff_bounds == (0.0, 0.0, 1.0)
    assert asian.run.samples == 2**16

    constant = load_run_config(ROOT / "constant_payoff.yaml").problem.build()
    assert constant.dim == 4
    assert constant.x0.tolist() == [1.0] * 4
    assert constant.payoff == ConstantPayoff(0.5)
    assert constant.payoff_bound == 0.5


def test_defaults():
    config = RunConfig.from_dict(minimal())
    assert config.run.seed == 0
    assert config.run.engine == "auto"
    assert config.output.verbosity == "info"
    spec = config.problem.build()
    assert spec.offspring == (0.0, 0.0, 1.0)


def test_yaml_round_trip(tmp_path):
    config = RunConfig.from_dict(minimal(offspring=[0.5, 0.0, 0.5], name="mixed"))
    assert RunConfig.from_dict(yaml.safe_load(config.to_yaml())) == config
    target = tmp_path / "run.yaml"
    save_run_config(config, target)
    assert load_run_config(target) == config


@pytest.mark.parametrize(
    "data, message",
    [
        (minimal() | {"extra": 1}, "top level"),
        (minimal(colour="red"), "problem"),
        ({"run": {}}, "problem"),
        (minimal() | {"run": {"samples_log2": 0}}, "samples_log2"),
        (minimal() | {"run": {"engine": "gpu"}}, "engine"),
        (minimal() | {"output": {"verbosity": "loud"}}, "verbosity"),
        ([1, 2], "mapping"),
    ],
)
def test_rejects_invalid_documents(data, message):
    with pytest.raises(InputValidationError, match=message):
        RunConfig.from_dict(data)


def test_non_constant_coefficients_need_bounds():
    section = RunConfig.from_dict(minimal(coeffs=[0.0, "coordinate(index=0)"])).problem
    with pytest.raises(InputValidationError, match="coeff_bounds"):
        section.build()
    bounded = RunConfig.from_dict(
        minimal(coeffs=[0.0, "coordinate(index=0)"], coeff_bounds=[0.0, 2.0])
    )
    assert bounded.problem.build().coeff_bounds == (0.0, 2.0)


def test_payoff_without_bound_needs_declaration():
    section = RunConfig.from_dict(minimal(payoff="call_on_average(strike=1.0)")).problem
    with pytest.raises(InputValidationError, match="payoff_bound"):
        section.build()


def test_overrides_ignore_none():
    config = RunConfig.from_dict(minimal())
    changed = config.with_overrides(seed=5, samples_log2=None, csv="out.csv")
    assert changed.run.seed == 5
    assert changed.run.samples_log2 == config.run.samples_log2
    assert changed.output.csv == "out.csv"
    with pytest.raises(InputValidationError):
        config.with_overrides(colour="red")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_run_config(tmp_path / "absent.yaml")


def test_malformed_yaml(tmp_path):
    target = tmp_path / "bad.yaml"
    target.write_text("problem: [unclosed\n")
    with pytest.raises(InputValidationError):
        load_run_config(target)
