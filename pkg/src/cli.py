#!/usr/bin/env python
"""CLI interface for fire-sale clearing (solve, sweep, symmetric, calibrate, validate-idf)."""

import functools
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

import click
import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

from src.exceptions import InvalidParameterError, NonConvergenceError
from src.flows.scenario import compute_metrics, run_scenario, run_sweep, sweep_to_csv
from src.models.demand import DemandKind
from src.models.network import BorrowingMode, FinancialNetwork
from src.models.results import SolverConfig
from src.models.scenario import Regime, Scenario, SweepParameter, SweepSpec, SymmetricScenario
from src.tasks.equilibrium import solve as solve_equilibrium
from src.tasks.inverse_demand import parse_idf, validate_assumption1, validate_uniqueness
from src.tasks.symmetric import closed_form, thresholds
from src.utils.calibration import (
    build_balance_sheets,
    build_network,
    load_balance_sheets,
    load_matrix_csv,
)

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


class InvalidInput(click.ClickException):
    exit_code = 3


class NotConverged(click.ClickException):
    exit_code = 2


class Number(click.ParamType):
    """Float that also accepts fractions such as 1/210."""

    name = "number"

    def convert(self, value, param, ctx):
        if isinstance(value, float):
            return value
        try:
            return float(Fraction(str(value).strip()))
        except (ValueError, ZeroDivisionError):
            self.fail(f"{value!r} is not a number", param, ctx)


NUMBER = Number()


def reports_errors(command):
    """Map solver errors onto the documented exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except NonConvergenceError as e:
            raise NotConverged(f"{e} (stage={e.stage}, iterations={e.iterations})") from e
        except (InvalidParameterError, ValidationError) as e:
            raise InvalidInput(str(e)) from e

    return wrapper


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if not raw:
        return default
    try:
        return float(raw)
    except ValueError as e:
        raise InvalidInput(f"{name}={raw!r} is not a number") from e


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
        logger.info(f"Wrote {out}")
    else:
        click.echo(text, nl=not text.endswith("\n"))


def _load_network(network_path: str, matrix_path: Optional[str], rate: float) -> FinancialNetwork:
    rows, rejected = load_balance_sheets(network_path)
    if rejected:
        click.echo(f"Skipped {len(rejected)} invalid rows in {network_path}", err=True)
    if not rows:
        raise InvalidParameterError(f"no valid balance-sheet rows in {network_path}")
    sheets = build_balance_sheets(rows)
    matrix = load_matrix_csv(matrix_path, sheets.n) if matrix_path else None
    return build_network(sheets, rate, matrix)


def _network_scenario(
    network_path: str,
    matrix_path: Optional[str],
    idf: str,
    rate: float,
    market_cap: Optional[float],
    nu: Optional[float],
) -> Scenario:
    network = _load_network(network_path, matrix_path, rate)
    demand = parse_idf(idf, market_cap or float(network.illiquid.sum()))
    return Scenario(network=network, demand=demand, nu=nu)


network_option = click.option(
    "--network", "network_path", type=click.Path(dir_okay=False), help="Balance-sheet CSV"
)
matrix_option = click.option(
    "--matrix", "matrix_path", type=click.Path(dir_okay=False), help="Liabilities CSV (from,to,amount)"
)
idf_option = click.option("--idf", help="Inverse demand, e.g. linear:alpha=1/210")
nu_option = click.option("--nu", type=NUMBER, help="Stress-test haircut for collateralized borrowing")
rate_option = click.option("--rate", type=NUMBER, help="Borrowing rate for every bank [FIRESALE_DEFAULT_RATE]")
market_cap_option = click.option("--market-cap", type=NUMBER, help="Shares in the market (default: total holdings)")
out_option = click.option("--out", type=click.Path(dir_okay=False), help="Write output here instead of stdout")


@click.group()
def cli():
    """Fire-sale clearing - liquidation, borrowing and price equilibria in interbank networks"""
    logging.basicConfig(
        level=os.getenv("FIRESALE_LOG_LEVEL", "INFO").upper(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


# ============================================================================
# Solver Commands
# ============================================================================


@cli.command()
@network_option
@matrix_option
@idf_option
@click.option(
    "--mode",
    type=click.Choice([regime.value for regime in Regime]),
    default=Regime.UNCOLLATERALIZED.value,
    show_default=True,
)
@nu_option
@rate_option
@market_cap_option
@out_option
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@reports_errors
def solve(network_path, matrix_path, idf, mode, nu, rate, market_cap, out, fmt):
    """Solve one network under one regime."""
    if not network_path or not idf:
        raise InvalidInput("solve needs --network and --idf")
    rate = rate if rate is not None else _env_float("FIRESALE_DEFAULT_RATE", 0.05)
    scenario = _network_scenario(network_path, matrix_path, idf, rate, market_cap, nu)
    regime = Regime(mode)

    outcome, metrics = run_scenario(scenario, regime, SolverConfig.from_env())

    if fmt == "csv":
        cases = getattr(outcome, "cases", [None] * scenario.network.n)
        borrowing = getattr(outcome, "borrowing", [0.0] * scenario.network.n)
        df = pd.DataFrame(
            {
                "bank": range(1, scenario.network.n + 1),
                "case": [case.value if case else "" for case in cases],
                "regime": [r.value for r in outcome.regimes],
                "liquidation": outcome.liquidations,
                "borrowing": borrowing,
                "payment": outcome.payments,
            }
        )
        _emit(df.to_csv(index=False, float_format="%.12g"), out)
        return

    document = outcome.to_document()
    document.diagnostics["metrics"] = metrics.model_dump()
    _emit(document.model_dump_json(indent=2), out)


@cli.command()
@network_option
@matrix_option
@idf_option
@click.option("--n", "n_banks", type=int, help="Symmetric base: number of banks")
@click.option("--h", "shortfall", type=NUMBER, help="Symmetric base: common shortfall")
@click.option("--a", "holding", type=NUMBER, help="Symmetric base: common illiquid holding")
@click.option(
    "--vary",
    type=click.Choice([p.value for p in SweepParameter]),
    required=True,
    help="Parameter to sweep",
)
@click.option("--lo", type=NUMBER, required=True)
@click.option("--hi", type=NUMBER, required=True)
@click.option("--steps", type=int, default=21, show_default=True)
@click.option(
    "--regime",
    "regimes",
    multiple=True,
    type=click.Choice([regime.value for regime in Regime]),
    help="Regimes to compare (default: all)",
)
@nu_option
@rate_option
@market_cap_option
@click.option("--allow-violations", is_flag=True, help="Allow alpha outside (0, 1/(2M))")
@click.option("--workers", type=int, help="Concurrent sweep points [FIRESALE_SWEEP_WORKERS]")
@out_option
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@reports_errors
def sweep(
    network_path,
    matrix_path,
    idf,
    n_banks,
    shortfall,
    holding,
    vary,
    lo,
    hi,
    steps,
    regimes,
    nu,
    rate,
    market_cap,
    allow_violations,
    workers,
    out,
    fmt,
):
    """Sweep rate, shortfall or alpha and tabulate prices, losses and defaults."""
    if not idf:
        raise InvalidInput("sweep needs --idf")
    rate = rate if rate is not None else _env_float("FIRESALE_DEFAULT_RATE", 0.05)

    if network_path:
        base = _network_scenario(network_path, matrix_path, idf, rate, market_cap, nu)
    elif None not in (n_banks, shortfall, holding):
        demand = parse_idf(idf, 1.0)
        if demand.kind != DemandKind.LINEAR:
            raise InvalidInput("symmetric sweeps use linear demand")
        symmetric = SymmetricScenario(
            n=n_banks,
            h=shortfall,
            a=holding,
            r=rate,
            alpha=demand.alpha,
            nu=nu,
            market_cap=market_cap,
        )
        base = Scenario.from_symmetric(symmetric)
    else:
        raise InvalidInput("sweep needs --network or all of --n, --h and --a")

    spec = SweepSpec(
        varied=SweepParameter(vary),
        lo=lo,
        hi=hi,
        steps=steps,
        regimes=[Regime(r) for r in regimes] or list(Regime),
        allow_violations=allow_violations,
    )
    spec.check_against(base)
    workers = workers or int(_env_float("FIRESALE_SWEEP_WORKERS", 4))

    df = run_sweep(base, spec, SolverConfig.from_env(), workers=workers)
    if fmt == "json":
        _emit(df.to_json(orient="records", indent=2), out)
    else:
        _emit(sweep_to_csv(df), out)


@cli.command()
@click.option("--n", "n_banks", type=int, required=True, help="Number of banks")
@click.option("--h", "shortfall", type=NUMBER, required=True, help="Common shortfall")
@click.option("--a", "holding", type=NUMBER, required=True, help="Common illiquid holding")
@click.option("--r", "rate", type=NUMBER, required=True, help="Common borrowing rate")
@click.option("--alpha", type=NUMBER, required=True, help="Linear price impact")
@nu_option
@click.option(
    "--mode",
    type=click.Choice([mode.value for mode in BorrowingMode]),
    default=BorrowingMode.UNCOLLATERALIZED.value,
    show_default=True,
)
@market_cap_option
@click.option("--check-solver", is_flag=True, help="Also run the numerical solver and report the gap")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
@reports_errors
def symmetric(n_banks, shortfall, holding, rate, alpha, nu, mode, market_cap, check_solver, fmt):
    """Closed-form equilibrium of n identical banks under linear demand."""
    scenario = SymmetricScenario(
        n=n_banks,
        h=shortfall,
        a=holding,
        r=rate,
        alpha=alpha,
        nu=nu,
        mode=BorrowingMode(mode),
        market_cap=market_cap,
    )
    equilibrium = closed_form(scenario)
    payload = {**equilibrium.model_dump(mode="json"), "thresholds": thresholds(scenario).model_dump()}

    if check_solver:
        result = solve_equilibrium(
            scenario.to_network(),
            scenario.demand(),
            scenario.mode,
            nu=scenario.nu,
            config=SolverConfig.from_env(),
        )
        payload["solver"] = {
            "price": result.price,
            "price_gap": abs(result.price - equilibrium.q),
            "liquidation_gap": float(abs(result.liquidations - equilibrium.s_per_bank).max()),
            "metrics": compute_metrics(result, scenario.to_network()).model_dump(),
        }

    if fmt == "json":
        click.echo(json.dumps(payload, indent=2))
        return
    click.echo(
        f"s={equilibrium.s_per_bank:.9f} q={equilibrium.q:.9f} regime={equilibrium.regime.value}"
    )
    if check_solver:
        click.echo(
            f"solver q={payload['solver']['price']:.9f} "
            f"(|dq|={payload['solver']['price_gap']:.2e}, |ds|={payload['solver']['liquidation_gap']:.2e})"
        )


# ============================================================================
# Data Commands
# ============================================================================


@cli.command()
@network_option
@out_option
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@reports_errors
def calibrate(network_path, out, fmt):
    """Derive stylized balance sheets (c, a, L0, p-bar) from a balance-sheet CSV."""
    if not network_path:
        raise InvalidInput("calibrate needs --network")
    rows, rejected = load_balance_sheets(network_path)
    for rejection in rejected:
        click.echo(f"row {rejection.row} ({rejection.bank_id}): {rejection.reason}", err=True)
    if not rows:
        raise InvalidParameterError(f"no valid balance-sheet rows in {network_path}")

    df = build_balance_sheets(rows).to_frame()
    if fmt == "json":
        _emit(df.to_json(orient="records", indent=2), out)
    else:
        _emit(df.to_csv(index=False, float_format="%.12g"), out)


@cli.command("validate-idf")
@click.option("--idf", required=True, help="Inverse demand, e.g. exp:alpha=0.005")
@click.option("--market-cap", type=NUMBER, required=True, help="Shares in the market")
@nu_option
@click.option("--grid-size", type=int, default=10_001, show_default=True)
@reports_errors
def validate_idf(idf, market_cap, nu, grid_size):
    """Check an inverse demand curve against the shape and uniqueness conditions."""
    demand = parse_idf(idf, market_cap)
    shape = validate_assumption1(demand, grid_size)
    unique = validate_uniqueness(demand, nu, grid_size)

    click.echo(f"{demand.label} on [0, {market_cap:g}]")
    for clause in shape.clauses:
        status = "ok" if clause.passed else f"FAIL (worst {clause.worst_value:.3g} at s={clause.worst_at:.6g})"
        click.echo(f"  {clause.name:<28} {status}")
    if shape.analytic_passed is not None:
        click.echo(f"  {'parameter range':<28} {'ok' if shape.analytic_passed else 'FAIL'}")
    click.echo(f"shape assumptions: {'pass' if shape.passed else 'fail'}")
    click.echo(
        f"uniqueness: {'pass' if unique.passed else 'fail'} (margin {unique.margin:.6g}"
        + (f", threshold {unique.analytic_threshold:.6g})" if unique.analytic_threshold else ")")
    )


if __name__ == "__main__":
    cli()
