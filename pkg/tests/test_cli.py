import math
from pathlib import Path

import pandas as pd
import pytest
import yaml

from branchmc.cli import EXIT_ERROR, EXIT_OK, EXIT_REJECTED, main

ROOT = Path(__file__).resolve().parents[1]


def write_config(tmp_path: Path, psi: float = 0.5, horizon: float = 2.0, samples_log2: int = 10):
    data = {
        "problem": {
            "dim": 1,
            "horizon": horizon,
            "beta": 0.1,
            "coeffs": [0.0, 0.0, 1.0],
            "payoff": f"constant_payoff(value={psi})",
        },
        "run": {"samples_log2": samples_log2, "seed": 1},
        "output": {"verbosity": "warning"},
    }
    target = tmp_path / "run.yaml"
    target.write_text(yaml.safe_dump(data))
    return target


def parse_key_values(text: str) -> dict[str, str]:
    pairs = (line.split(" = ", 1) for line in text.splitlines() if " = " in line)
    return {key: value for key, value in pairs}


def test_feasibility_command(capsys, tmp_path):
    rho_csv = tmp_path / "rho.csv"
    code = main(["feasibility", str(ROOT / "asian_pde1.yaml"), "--rho-csv", str(rho_csv), "-q"])
    assert code == EXIT_OK
    values = parse_key_values(capsys.readouterr().out)
    assert values["classification"] == "L1"
    assert float(values["r0"]) == pytest.approx(1.0)
    assert len(pd.read_csv(rho_csv)) > 1


def test_feasibility_summary_csv(capsys, tmp_path):
    out = tmp_path / "summary.csv"
    assert main(["feasibility", str(ROOT / "asian_pde1.yaml"), "--out", str(out), "-q"]) == EXIT_OK
    printed = parse_key_values(capsys.readouterr().out)
    frame = pd.read_csv(out)
    assert len(frame) == 1
    assert frame["classification"].iloc[0] == printed["classification"] == "L1"
    assert frame["r0"].iloc[0] == pytest.approx(1.0)


def test_infeasible_problem_exits_with_rejection(capsys, tmp_path):
    config = write_config(tmp_path, psi=2.0, horizon=8.0)
    assert main(["feasibility", str(config)]) == EXIT_REJECTED
    assert parse_key_values(capsys.readouterr().out)["classification"] == "INFEASIBLE"

    assert main(["solve", str(config)]) == EXIT_REJECTED
    captured = capsys.readouterr()
    assert "error:" in captured.err
    assert float(parse_key_values(captured.out)["blow_up_time"]) == pytest.approx(
        10 * math.log(2), abs=0.01
    )


def test_solve_command(capsys, tmp_path):
    config = write_config(tmp_path, samples_log2=14)
    out = tmp_path / "result.csv"
    assert main(["solve", str(config), "--out", str(out), "--seed", "3"]) == EXIT_OK
    values = parse_key_values(capsys.readouterr().out)
    mean, std_error = float(values["mean"]), float(values["std_error"])
    assert abs(mean - 1 / (1 + math.exp(0.2))) <= 4 * std_error
    row = pd.read_csv(out).iloc[0]
    assert row["seed"] == 3
    assert row["samples"] == 2**14


def test_benchmark_command(capsys):
    assert main(["benchmark", "constant-plus"]) == EXIT_OK
    values = parse_key_values(capsys.readouterr().out)
    assert float(values["value"]) == pytest.approx(0.450166, abs=1e-6)


def test_table_command(tmp_path):
    out = tmp_path / "table.csv"
    assert main(["table", "1", "--n-min", "6", "--n-max", "6", "--out", str(out), "-q"]) == EXIT_OK
    frame = pd.read_csv(out)
    assert frame.columns.tolist() == [
        "N",
        "fair_pde1_pct",
        "stdev_pde1_pct",
        "fair_pde2_pct",
        "stdev_pde2_pct",
        "cpu_seconds",
    ]
    assert frame["N"].tolist() == [6]


def test_convergence_command(tmp_path):
    config = write_config(tmp_path, samples_log2=8)
    out = tmp_path / "convergence.csv"
    args = ["convergence", str(config), "--halvings", "1", "--out", str(out)]
    assert main(args) == EXIT_OK
    frame = pd.read_csv(out)
    assert len(frame) == 2 * 3
    assert sorted(frame["N"].unique().tolist()) == [4, 6, 8]


def test_missing_config_is_an_error(capsys, tmp_path):
    assert main(["solve", str(tmp_path / "absent.yaml")]) == EXIT_ERROR
    assert "not found" in capsys.readouterr().err


def test_invalid_config_is_an_error(capsys, tmp_path):
    target = tmp_path / "bad.yaml"
    target.write_text("problem:\n  dim: 1\n")
    assert main(["solve", str(target)]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
