# tests/test_cli.py
"""Command-line surface: outputs and exit codes."""

import json
from pathlib import Path

import pandas as pd
import pytest
from click.testing import CliRunner

from src.cli import cli
from src.flows.scenario import SWEEP_COLUMNS

EXAMPLES = Path(__file__).resolve().parent.parent / "data" / "examples"
SHEETS = str(EXAMPLES / "balance_sheets.csv")
MATRIX = str(EXAMPLES / "liabilities.csv")
NINETY = ["--n", "90", "--h", "1", "--a", "10/9"]


@pytest.fixture
def runner():
    return CliRunner()


# ============================================================================
# SYMMETRIC
# ============================================================================


def test_symmetric_text(runner):
    result = runner.invoke(cli, ["symmetric", *NINETY, "--r", "0.05", "--alpha", "1/210"])
    assert result.exit_code == 0, result.output
    assert result.stdout.startswith("s=0.10989")
    assert "q=0.95290" in result.stdout
    assert "regime=Mixed" in result.stdout


def test_symmetric_json_with_solver_check(runner):
    result = runner.invoke(
        cli,
        ["symmetric", *NINETY, "--r", "0.05", "--alpha", "1/210", "--check-solver", "--format", "json"],
    )
    assert result.exit_code == 0, result.output
    payload = json.loads(result.stdout)
    assert payload["regime"] == "Mixed"
    assert payload["solver"]["price_gap"] < 1e-8
    assert set(payload["thresholds"]) >= {"h_liquidate_mixed", "h_mixed_cap"}


def test_symmetric_precondition_exit_code(runner):
    result = runner.invoke(cli, ["symmetric", "--n", "3", "--h", "0", "--a", "1", "--r", "0.1", "--alpha", "0.05"])
    assert result.exit_code == 3


def test_solver_cap_exit_code(runner):
    result = runner.invoke(
        cli,
        ["symmetric", *NINETY, "--r", "0.05", "--alpha", "1/210", "--check-solver"],
        env={"FIRESALE_MAX_OUTER": "1"},
    )
    assert result.exit_code == 2
    assert "stage=outer" in result.output


def test_bad_solver_setting_exit_code(runner):
    result = runner.invoke(
        cli,
        ["symmetric", *NINETY, "--r", "0.05", "--alpha", "1/210", "--check-solver"],
        env={"FIRESALE_MAX_OUTER": "0"},
    )
    assert result.exit_code == 3


# ============================================================================
# VALIDATE-IDF
# ============================================================================


def test_validate_idf_passes(runner):
    result = runner.invoke(cli, ["validate-idf", "--idf", "linear:alpha=1/210", "--market-cap", "100"])
    assert result.exit_code == 0, result.output
    assert "shape assumptions: pass" in result.stdout
    assert "uniqueness: pass" in result.stdout


def test_validate_idf_reports_failure(runner):
    result = runner.invoke(cli, ["validate-idf", "--idf", "hyp:eps=150", "--market-cap", "100"])
    assert result.exit_code == 0, result.output
    assert "uniqueness: fail" in result.stdout


def test_validate_idf_malformed(runner):
    result = runner.invoke(cli, ["validate-idf", "--idf", "quadratic:alpha=1", "--market-cap", "100"])
    assert result.exit_code == 3


# ============================================================================
# CALIBRATE AND SOLVE
# ============================================================================


def test_calibrate_examples(runner):
    result = runner.invoke(cli, ["calibrate", "--network", SHEETS])
    assert result.exit_code == 0, result.output
    lines = result.stdout.strip().splitlines()
    assert lines[0].startswith("bank_id,liquid,illiquid")
    assert len(lines) == 7


def test_calibrate_needs_network(runner):
    assert runner.invoke(cli, ["calibrate"]).exit_code == 3


def test_solve_json(runner):
    result = runner.invoke(
        cli,
        ["solve", "--network", SHEETS, "--matrix", MATRIX, "--idf", "linear:alpha=0.00001"],
    )
    assert result.exit_code == 0, result.output
    document = json.loads(result.stdout)
    assert document["mode"] == "uncollateralized"
    assert len(document["liquidations"]) == 6
    assert 0 < document["price"] <= 1
    assert "metrics" in document["diagnostics"]


def test_solve_csv_to_file(runner, tmp_path):
    out = tmp_path / "banks.csv"
    result = runner.invoke(
        cli,
        [
            "solve",
            "--network", SHEETS,
            "--idf", "exp:alpha=0.00001",
            "--mode", "fire_sale",
            "--format", "csv",
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    df = pd.read_csv(out)
    assert list(df.columns) == ["bank", "case", "regime", "liquidation", "borrowing", "payment"]
    assert (df["borrowing"] == 0).all()


def test_solve_collateralized_needs_haircut(runner):
    result = runner.invoke(
        cli,
        ["solve", "--network", SHEETS, "--idf", "linear:alpha=0.00001", "--mode", "collateralized"],
    )
    assert result.exit_code == 3


def test_solve_needs_network_and_idf(runner):
    assert runner.invoke(cli, ["solve", "--idf", "linear:alpha=0.001"]).exit_code == 3


# ============================================================================
# SWEEP
# ============================================================================


def test_rate_sweep_csv(runner, prefect_harness, tmp_path):
    out = tmp_path / "sweep.csv"
    result = runner.invoke(
        cli,
        [
            "sweep",
            *NINETY,
            "--idf", "linear:alpha=1/210",
            "--vary", "rate",
            "--lo", "0.02",
            "--hi", "0.1",
            "--steps", "3",
            "--regime", "uncollateralized",
            "--regime", "fire_sale",
            "--workers", "2",
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    lines = out.read_text().strip().splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    assert len(lines) == 1 + 3 * 2


def test_alpha_sweep_outside_range_rejected(runner):
    result = runner.invoke(
        cli,
        ["sweep", *NINETY, "--idf", "linear:alpha=1/210", "--vary", "alpha", "--lo", "0.001", "--hi", "0.01"],
    )
    assert result.exit_code == 3
    assert "allow-violations" in result.output


def test_sweep_needs_a_base(runner):
    result = runner.invoke(cli, ["sweep", "--idf", "linear:alpha=1/210", "--vary", "rate", "--lo", "0", "--hi", "1"])
    assert result.exit_code == 3


def test_shortfall_sweep_on_network_rejected(runner):
    result = runner.invoke(
        cli,
        [
            "sweep",
            "--network", SHEETS,
            "--idf", "linear:alpha=0.00001",
            "--vary", "shortfall",
            "--lo", "0.1",
            "--hi", "0.5",
        ],
    )
    assert result.exit_code == 3
    assert "symmetric" in result.output
