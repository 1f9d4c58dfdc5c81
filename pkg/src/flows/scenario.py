# src/flows/scenario.py
"""Prefect flows for scenario runs and parameter sweeps."""

import logging
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from prefect import flow, get_run_logger, task, unmapped
from prefect.cache_policies import NONE
from prefect.task_runners import ThreadPoolTaskRunner
from pydantic import ValidationError

from src.exceptions import FireSaleError
from src.models.network import FinancialNetwork
from src.models.results import BankRegime, ClearingOutcome, EquilibriumResult, SolverConfig
from src.models.scenario import Metrics, Regime, Scenario, SweepRow, SweepSpec
from src.tasks.equilibrium import solve
from src.tasks.fire_sale import clear

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "param",
    "regime",
    "price",
    "realized_loss",
    "mtm_loss",
    "interest_cost",
    "defaults",
    "outer_iters",
    "converged",
]
_REGIME_ORDER = {regime: index for index, regime in enumerate(Regime)}

Outcome = Union[EquilibriumResult, ClearingOutcome]


# ============================================================================
# SCENARIO RUNS
# ============================================================================


def compute_metrics(outcome: Outcome, network: FinancialNetwork) -> Metrics:
    """Losses, interest and default count of one clearing outcome."""
    discount = max(1.0 - outcome.price, 0.0)
    if isinstance(outcome, ClearingOutcome):
        interest = 0.0
        defaults = len(outcome.defaults)
    else:
        interest = float(network.rates @ outcome.borrowing)
        defaults = sum(1 for regime in outcome.regimes if regime == BankRegime.INSOLVENT)
    return Metrics(
        price=outcome.price,
        realized_loss=float(outcome.liquidations.sum()) * discount,
        mtm_loss=float(network.illiquid.sum()) * discount,
        interest_cost=max(interest, 0.0),
        defaults=defaults,
    )


def run_scenario(
    scenario: Scenario,
    regime: Regime,
    config: Optional[SolverConfig] = None,
) -> Tuple[Outcome, Metrics]:
    """
    Solve one scenario under one regime and compute its metrics.

    Solver errors propagate to the caller.
    """
    if regime == Regime.FIRE_SALE:
        outcome = clear(scenario.network, scenario.demand, config)
    else:
        outcome = solve(
            scenario.network,
            scenario.demand,
            regime.borrowing_mode,
            nu=scenario.nu,
            config=config,
        )
    return outcome, compute_metrics(outcome, scenario.network)


def evaluate_point(
    base: Scenario,
    spec: SweepSpec,
    value: float,
    regime: Regime,
    config: Optional[SolverConfig] = None,
) -> SweepRow:
    """One sweep row; failures become a row with converged=False instead of raising."""
    try:
        outcome, metrics = run_scenario(base.with_parameter(spec.varied, value), regime, config)
    except (FireSaleError, ValidationError) as e:
        logger.warning(f"Sweep point {spec.varied.value}={value:.6g} ({regime.value}) failed: {e}")
        return SweepRow(param=value, regime=regime, converged=False, error=str(e))

    iterations = outcome.iterations if isinstance(outcome, ClearingOutcome) else outcome.outer_iters
    return SweepRow(
        param=value,
        regime=regime,
        outer_iters=iterations,
        **metrics.model_dump(),
    )


def sweep_points(spec: SweepSpec) -> List[Tuple[float, Regime]]:
    return [(value, regime) for value in spec.values() for regime in spec.regimes]


def assemble_sweep_table(rows: List[SweepRow]) -> pd.DataFrame:
    """Rows sorted by (param, regime) with the fixed CSV columns."""
    ordered = sorted(rows, key=lambda row: (row.param, _REGIME_ORDER[row.regime]))
    records = [
        {
            **row.model_dump(include=set(SWEEP_COLUMNS)),
            "regime": row.regime.value,
        }
        for row in ordered
    ]
    df = pd.DataFrame.from_records(records, columns=SWEEP_COLUMNS)
    df["defaults"] = df["defaults"].astype("Int64")
    df["outer_iters"] = df["outer_iters"].astype("Int64")
    return df


def sweep_to_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format="%.12g", na_rep="nan")


# ============================================================================
# PREFECT TASKS AND FLOWS
# ============================================================================


@task(name="evaluate_sweep_point", cache_policy=NONE)
def evaluate_point_task(
    base: Scenario,
    spec: SweepSpec,
    point: Tuple[float, Regime],
    config: Optional[SolverConfig] = None,
) -> SweepRow:
    """Evaluate one (parameter, regime) point of a sweep."""
    value, regime = point
    row = evaluate_point(base, spec, value, regime, config)
    get_run_logger().info(
        f"{spec.varied.value}={value:.6g} {regime.value}: "
        + (f"q={row.price:.8f}" if row.converged else "failed")
    )
    return row


@flow(name="scenario_sweep", validate_parameters=False)
def sweep(
    base: Scenario,
    spec: SweepSpec,
    config: Optional[SolverConfig] = None,
) -> pd.DataFrame:
    """
    Evaluate every (parameter, regime) point of `spec` concurrently.

    Args:
        base: Scenario the varied parameter is applied to
        spec: Varied parameter, grid and regimes
        config: Solver tolerances and caps

    Returns:
        DataFrame with one row per point, ordered by (param, regime)
    """
    flow_logger = get_run_logger()
    spec.check_against(base)
    points = sweep_points(spec)
    flow_logger.info(f"Sweeping {spec.varied.value} over {spec.steps} values x {len(spec.regimes)} regimes")

    futures = evaluate_point_task.map(unmapped(base), unmapped(spec), points, unmapped(config))
    rows = [future.result() for future in futures]

    failed = sum(1 for row in rows if not row.converged)
    if failed:
        flow_logger.warning(f"{failed} of {len(rows)} sweep points did not converge")
    return assemble_sweep_table(rows)


def run_sweep(
    base: Scenario,
    spec: SweepSpec,
    config: Optional[SolverConfig] = None,
    workers: int = 4,
) -> pd.DataFrame:
    """Run the sweep flow on a thread pool of `workers` threads."""
    runner = ThreadPoolTaskRunner(max_workers=max(1, workers))
    return sweep.with_options(task_runner=runner)(base, spec, config)


def default_count_curve(df: pd.DataFrame, regime: Regime) -> np.ndarray:
    """Default counts of one regime in parameter order (NaN rows dropped)."""
    subset = df[(df["regime"] == regime.value) & df["converged"]]
    return subset.sort_values("param")["defaults"].to_numpy(dtype=float)
