# src/tasks/fire_sale.py
"""Pure fire-sale clearing: payments and price without any borrowing."""

import logging
from typing import Optional, Tuple

import numpy as np

from src.exceptions import InvalidParameterError, NonConvergenceError
from src.models.demand import InverseDemand
from src.models.network import FinancialNetwork
from src.models.results import BankRegime, ClearingOutcome, SolverConfig
from src.tasks.network import relative_liabilities

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-12


def _liquidations(
    p: np.ndarray,
    q: float,
    network: FinancialNetwork,
    pi_t: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Forced sales min(a, need^+ / q) and the interbank income Pi^T p behind them."""
    incoming = pi_t @ p
    need = network.total_liabilities - network.liquid - incoming
    return np.minimum(network.illiquid, np.maximum(need, 0.0) / q), incoming


def clear(
    network: FinancialNetwork,
    demand: InverseDemand,
    config: Optional[SolverConfig] = None,
) -> ClearingOutcome:
    """
    Joint payment / price fixed point when every bank must sell to pay.

    Simultaneous Picard iteration from (p-bar, 1): sales follow from the
    current payments and price, the price from total sales, and payments
    from cash plus sale proceeds plus interbank income. Iterates decrease
    monotonically; a rise beyond rounding raises NonConvergenceError.

    Args:
        network: Balance sheets and obligations (no case partition applies)
        demand: Inverse demand curve; M must cover every bank's holding
        config: `outer_tol` is the joint tolerance, `max_outer` the cap

    Returns:
        ClearingOutcome with payments, price, sales, defaults and residuals
    """
    config = config or SolverConfig()
    held = float(network.illiquid.sum())
    if held > demand.market_cap * (1 + 1e-12):
        raise InvalidParameterError(
            f"market cap {demand.market_cap} is below total illiquid holdings {held}"
        )

    pbar = network.total_liabilities
    pi_t = relative_liabilities(network).interbank.T
    # Payments are in currency; compare them on the scale of the largest obligation.
    scale = max(1.0, float(pbar.max())) if network.n else 1.0

    p, q = pbar.copy(), 1.0
    for iteration in range(1, config.max_outer + 1):
        s, incoming = _liquidations(p, q, network, pi_t)
        q_next = demand.price(float(s.sum()))
        p_next = np.minimum(pbar, network.liquid + s * q + incoming)

        rise = max(float(np.max(p_next - p, initial=0.0)) / scale, q_next - q)
        if rise > MONOTONE_SLACK:
            raise NonConvergenceError(
                f"fire-sale iterates increased by {rise:.3e} at step {iteration}",
                stage="fire_sale",
                iterations=iteration,
                residual=rise,
            )

        change = max(float(np.max(np.abs(p_next - p), initial=0.0)) / scale, abs(q_next - q))
        p, q = p_next, q_next
        if change <= config.outer_tol:
            break
    else:
        raise NonConvergenceError(
            f"fire-sale clearing did not settle after {config.max_outer} steps",
            stage="fire_sale",
            iterations=config.max_outer,
            residual=change,
        )

    s, incoming = _liquidations(p, q, network, pi_t)
    implied_q = demand.price(float(s.sum()))
    residuals = {
        "payment": float(
            np.max(np.abs(p - np.minimum(pbar, network.liquid + s * q + incoming)), initial=0.0)
        )
        / scale,
        "liquidation": float(
            np.max(np.abs(s - _liquidations(p, implied_q, network, pi_t)[0]), initial=0.0)
        ),
        "price": abs(q - implied_q),
    }

    defaulted = pbar - p > 1e-9 * scale
    defaults = tuple(int(i) for i in np.flatnonzero(defaulted))
    regimes = tuple(
        BankRegime.INSOLVENT
        if defaulted[i]
        else BankRegime.LIQUIDATE_ONLY
        if s[i] > 0
        else BankRegime.NO_ACTION
        for i in range(network.n)
    )

    for array in (p, s):
        array.setflags(write=False)
    logger.info(f"Fire-sale clearing: q={q:.10f}, {len(defaults)} defaults after {iteration} steps")
    return ClearingOutcome(
        payments=p,
        price=q,
        liquidations=s,
        defaults=defaults,
        iterations=iteration,
        residuals=residuals,
        regimes=regimes,
    )
