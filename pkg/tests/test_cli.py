import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from mcflow.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, build_parser, main, prepare_config
from mcflow.shared.artifact_store import ArtifactStore
from mcflow.shared.errors import ConfigError

REPO = Path(__file__).resolve().parent.parent

PLOT_CONFIG = """\
experiment: plot
geometry:
  kind: circle
  radius_or_period: 1.0
  grid_size: {grid_size}
horizon: 0.05
"""


@pytest.fixture
def plot_config(tmp_path):
    path = tmp_path / "plot.yaml"
    path.write_text(PLOT_CONFIG.format(grid_size=32))
    return path


@pytest.fixture
def snapshot_csv(tmp_path):
    times = np.linspace(0.0, 0.05, 5)
    theta = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    rows = [
        {"t": t, "grid_index": i, "theta_or_coords": x, "u": np.sqrt(1 - 2 * t) - 1}
        for t in times for i, x in enumerate(theta)
    ]
    path = tmp_path / "existence_snapshots.csv"
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


def run_cli(*argv):
    return main(["--settings", str(REPO / "config" / "config.yaml"), *map(str, argv)])


# ========== Plot ==========

def test_plot_snapshot_heatmap(tmp_path, plot_config, snapshot_csv):
    out = tmp_path / "out"
    code = run_cli("plot", "--config", plot_config, "--out", out, "--input", snapshot_csv)
    assert code == EXIT_OK
    assert "<svg" in (out / "existence_snapshots.svg").read_text()
    summary = json.loads((out / "plot_summary.json").read_text())
    assert summary["pass"] is True
    assert "existence_snapshots.svg" in summary["artifacts"]


def test_plot_table_line_plot(tmp_path, plot_config):
    table = tmp_path / "kernel_G.csv"
    pd.DataFrame({"order": [0, 1, 2], "C_fit": [0.29, 0.5, 1.1]}).to_csv(table, index=False)
    out = tmp_path / "out"
    assert run_cli("plot", "--config", plot_config, "--out", out, "--input", table) == EXIT_OK
    assert (out / "kernel_G.svg").exists()


def test_plot_unreadable_input_fails(tmp_path, plot_config):
    out = tmp_path / "out"
    code = run_cli("plot", "--config", plot_config, "--out", out, "--input", tmp_path / "missing.csv")
    assert code == EXIT_FAILED
    summary = json.loads((out / "plot_summary.json").read_text())
    assert [check["name"] for check in summary["checks"]] == ["plot_input_readable"]


def test_unwritable_summary_fails_the_run(tmp_path, plot_config, snapshot_csv, monkeypatch):
    monkeypatch.setattr(ArtifactStore, "write_json", lambda self, name, payload: None)
    out = tmp_path / "out"
    code = run_cli("plot", "--config", plot_config, "--out", out, "--input", snapshot_csv)
    assert code == EXIT_FAILED
    assert not (out / "plot_summary.json").exists()


def test_plot_without_input_is_config_error(tmp_path, plot_config):
    assert run_cli("plot", "--config", plot_config, "--out", tmp_path / "out") == EXIT_CONFIG


# ========== Config errors ==========

def test_invalid_config_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(PLOT_CONFIG.format(grid_size=15))
    assert run_cli("plot", "--config", path, "--out", tmp_path / "out") == EXIT_CONFIG
    assert f"{path}:5: geometry.grid_size" in capsys.readouterr().err


def test_unknown_key_is_config_error(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(PLOT_CONFIG.format(grid_size=32) + "frobnicate: 1\n")
    assert run_cli("plot", "--config", path, "--out", tmp_path / "out") == EXIT_CONFIG
    assert f"{path}:7: frobnicate" in capsys.readouterr().err


def test_yaml_syntax_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("experiment: plot\ngeometry: [circle\n")
    assert run_cli("plot", "--config", path) == EXIT_CONFIG


def test_config_for_another_subcommand(tmp_path, capsys):
    code = run_cli("plot", "--config", REPO / "config" / "experiments" / "norms.yaml", "--out", tmp_path)
    assert code == EXIT_CONFIG
    assert "config is for 'norms', not 'plot'" in capsys.readouterr().err


def test_seed_override(plot_config):
    args = build_parser().parse_args(["plot", "--config", str(plot_config), "--seed", "99", "--input", "a.csv"])
    config = prepare_config(args)
    assert config.seed == 99
    assert config.plot.input == "a.csv"


def test_seed_must_be_unsigned(plot_config):
    args = build_parser().parse_args(["plot", "--config", str(plot_config), "--seed", "-1"])
    with pytest.raises(ConfigError):
        prepare_config(args)


def test_every_subcommand_is_registered():
    parser = build_parser()
    for name in ["existence", "perturbation", "kernel-bounds", "contraction", "norms", "oracle-compare", "plot"]:
        assert parser.parse_args([name, "--config", "x.yaml"]).subcommand == name


# ========== Experiments ==========

@pytest.mark.slow
def test_norms_experiment(tmp_path):
    out = tmp_path / "norms"
    assert run_cli("norms", "--config", REPO / "config" / "experiments" / "norms.yaml", "--out", out) == EXIT_OK
    summary = json.loads((out / "norms_summary.json").read_text())
    assert summary["pass"] is True
    assert (out / "norms_pairs.csv").exists()


@pytest.mark.slow
def test_existence_circle_experiment(tmp_path):
    out = tmp_path / "existence"
    config = REPO / "config" / "experiments" / "existence_circle.yaml"
    assert run_cli("existence", "--config", config, "--out", out) == EXIT_OK
    summary = json.loads((out / "existence_summary.json").read_text())
    assert summary["pass"] is True
    assert {"C1", "C2", "C3"} <= set(summary["fitted_constants"])
    frame = pd.read_csv(out / "existence_snapshots.csv")
    assert list(frame.columns) == ["t", "grid_index", "theta_or_coords", "u"]


@pytest.mark.slow
def test_existence_sphere_experiment(tmp_path):
    out = tmp_path / "sphere"
    config = REPO / "config" / "experiments" / "existence_sphere.yaml"
    assert run_cli("existence", "--config", config, "--out", out) == EXIT_OK
    summary = json.loads((out / "existence_summary.json").read_text())
    assert summary["max_errors"]["exact"] < 1e-3
    assert summary["fitted_constants"]["T_run"] <= summary["fitted_constants"]["T_recipe"]


@pytest.mark.slow
def test_summary_is_byte_identical_across_runs(tmp_path):
    config = REPO / "config" / "experiments" / "norms.yaml"
    out = tmp_path / "norms"
    assert run_cli("norms", "--config", config, "--out", out) == EXIT_OK
    first = (out / "norms_summary.json").read_bytes()
    assert run_cli("norms", "--config", config, "--out", out) == EXIT_OK
    assert (out / "norms_summary.json").read_bytes() == first


@pytest.mark.slow
def test_contraction_at_recipe_constants(tmp_path):
    out = tmp_path / "contraction"
    config = REPO / "config" / "experiments" / "contraction.yaml"
    assert run_cli("contraction", "--config", config, "--out", out) == EXIT_OK
    summary = json.loads((out / "contraction_summary.json").read_text())
    check = next(c for c in summary["checks"] if c["name"] == "contraction_half")
    assert check["passed"] and check["value"] <= 0.5


@pytest.mark.slow
def test_sharp_kernel_bounds_exit_failed(tmp_path):
    out = tmp_path / "sharp"
    config = REPO / "config" / "experiments" / "kernel_bounds_sharp.yaml"
    assert run_cli("kernel-bounds", "--config", config, "--out", out) == EXIT_FAILED
    summary = json.loads((out / "kernel_bounds_summary.json").read_text())
    assert summary["pass"] is False
    failed = [c["name"] for c in summary["checks"] if not c["passed"]]
    assert "gaussian_bound[G,order=1]" in failed


@pytest.mark.slow
def test_perturbation_constant_linear_in_data(tmp_path):
    out = tmp_path / "perturbation"
    config = REPO / "config" / "experiments" / "perturbation.yaml"
    assert run_cli("perturbation", "--config", config, "--out", out) == EXIT_OK
    summary = json.loads((out / "perturbation_summary.json").read_text())
    checks = {c["name"]: c for c in summary["checks"]}
    assert checks["c01_linear_in_data"]["passed"]
    assert checks["c01_linear_in_data"]["value"] <= 1.2
    assert checks["data_within_epsilon[a=0.01]"]["passed"]
    constants = [summary["fitted_constants"][f"c01_constant[a={a}]"] for a in ("0.001", "0.01")]
    assert max(constants) <= 1.2 * min(constants)


@pytest.mark.slow
def test_perturbation_data_above_epsilon_fails(tmp_path):
    text = (REPO / "config" / "experiments" / "perturbation.yaml").read_text()
    config = tmp_path / "large.yaml"
    config.write_text(text.replace("amplitudes: [1.0e-3, 1.0e-2]", "amplitudes: [0.2]"))
    out = tmp_path / "large"
    assert run_cli("perturbation", "--config", config, "--out", out) == EXIT_FAILED
    summary = json.loads((out / "perturbation_summary.json").read_text())
    assert [c["name"] for c in summary["checks"] if not c["passed"]] == ["data_within_epsilon[a=0.2]"]
    assert not (out / "perturbation_snapshots_a0.2.csv").exists()
