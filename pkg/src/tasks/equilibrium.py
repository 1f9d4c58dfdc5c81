# src/tasks/equilibrium.py
"""
Joint liquidation / price equilibrium under borrowing.

Outer loop: fixed point of the price map q -> f(sum of s(q)).
Inner loop: projected gradient iteration to the fixed-price Nash
equilibrium s(q) of the participating banks.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from src.exceptions import InvalidParameterError, NonConvergenceError
from src.models.demand import InverseDemand
from src.models.network import BankCase, BorrowingMode, ClassifiedSystem, FinancialNetwork
from src.models.results import BankRegime, EquilibriumResult, SolverConfig
from src.tasks.best_response import box_upper
from src.tasks.inverse_demand import validate_uniqueness
from src.tasks.network import classify

logger = logging.getLogger(__name__)

FALLBACK_STEP = 1e-3  # times M, used when the projected step is degenerate
SHARE_TOL = 1e-12  # times M, zero-sale threshold for regime labels
OSCILLATION_RATIO = 0.9  # |dq_k| / |dq_{k-1}| above which an alternating price path is averaged


def upper_bounds(system: ClassifiedSystem, q: float) -> np.ndarray:
    """Per-bank liquidation caps at price q; zero for banks that do not play."""
    network = system.network
    upper = np.zeros(system.n)
    for i in np.flatnonzero(system.participants):
        upper[i] = box_upper(network.illiquid[i], system.shortfalls[i], q, system.mode)
    return upper


def _raw_gradient(s: np.ndarray, system: ClassifiedSystem, demand: InverseDemand) -> np.ndarray:
    total = float(s.sum())
    g_hat = 1 / (1 + system.network.rates) - demand.price(total) - s * demand.slope(total)
    return np.where(system.participants, g_hat, 0.0)


def _project(g_hat: np.ndarray, s: np.ndarray, upper: np.ndarray) -> np.ndarray:
    # At s_i = 0 only decreasing components survive; at s_i = upper_i only increasing ones.
    g = g_hat.copy()
    at_lower = s <= 0
    at_upper = s >= upper
    g[at_lower] = np.minimum(g[at_lower], 0.0)
    g[at_upper] = np.maximum(g[at_upper], 0.0)
    g[at_lower & at_upper] = 0.0
    return g


def g_map(s: np.ndarray, q: float, system: ClassifiedSystem, demand: InverseDemand) -> np.ndarray:
    """
    Projected marginal-cost map of the fixed-price game.

    g-hat_i = 1/(1 + r_i) - f(S) - s_i f'(S) for participants, zero otherwise;
    components pushing out of the box [0, upper(q)] are removed.
    """
    return _project(_raw_gradient(s, system, demand), s, upper_bounds(system, q))


def jacobian_G(s: np.ndarray, system: ClassifiedSystem, demand: InverseDemand) -> np.ndarray:
    """G(s) = -diag(participants) ((I + 1) f'(S) + diag(s) 1 f''(S))."""
    n = system.n
    total = float(s.sum())
    ones = np.ones((n, n))
    G = (np.eye(n) + ones) * demand.slope(total) + np.diag(s) @ ones * demand.curvature(total)
    return -np.where(system.participants[:, None], G, 0.0)


def _apply_G(
    v: np.ndarray,
    s: np.ndarray,
    participants: np.ndarray,
    slope: float,
    curvature: float,
) -> np.ndarray:
    """G(s) @ v without forming G."""
    v_sum = float(v.sum())
    return np.where(participants, -((v + v_sum) * slope + s * v_sum * curvature), 0.0)


def _inner_loop(
    q: float,
    s: np.ndarray,
    system: ClassifiedSystem,
    demand: InverseDemand,
    config: SolverConfig,
) -> Tuple[np.ndarray, int, int]:
    """Run the projected iteration from `s`; returns (s, iterations, fallback steps)."""
    upper = upper_bounds(system, q)
    participants = system.participants
    s = np.clip(s, 0.0, upper)
    fallbacks = 0

    for iteration in range(config.max_inner + 1):
        total = float(s.sum())
        g_hat = _raw_gradient(s, system, demand)
        v = _project(g_hat, s, upper)
        residual = float(np.max(np.abs(v))) if v.size else 0.0
        if residual <= config.inner_tol:
            return s, iteration, fallbacks
        if iteration == config.max_inner:
            break

        Gv = _apply_G(v, s, participants, demand.slope(total), demand.curvature(total))
        denom = float(Gv @ Gv)
        step = -float(v @ Gv) / denom if denom > 0 else 0.0
        if not np.isfinite(step) or step >= 0:
            step = -FALLBACK_STEP * demand.market_cap
            fallbacks += 1
        s = np.clip(s + step * v, 0.0, upper)

    raise NonConvergenceError(
        f"inner iteration at q={q:.10f} stalled with ||g||={residual:.3e}",
        stage="inner",
        iterations=config.max_inner,
        residual=residual,
    )


def inner_equilibrium(
    q: float,
    system: ClassifiedSystem,
    demand: InverseDemand,
    config: Optional[SolverConfig] = None,
    initial: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Nash equilibrium liquidations of the game with the constraint set frozen at price q.

    Args:
        q: Price used in the constraints, in [f(M), 1]
        system: Classified banks
        demand: Inverse demand curve
        config: Tolerances and caps
        initial: Starting liquidations (zeros by default)

    Returns:
        Equilibrium liquidations s(q)
    """
    config = config or SolverConfig()
    if not demand.price(demand.market_cap) <= q <= 1:
        raise InvalidParameterError(f"price {q} is outside [f(M), 1]")
    start = np.zeros(system.n) if initial is None else np.asarray(initial, dtype=float)
    s, _, _ = _inner_loop(q, start, system, demand, config)
    return s


# ============================================================================
# OUTER LOOP
# ============================================================================


def _should_average(step: float, last_step: float, averaged: bool) -> bool:
    """
    Whether the next price update is the average q + step/2 instead of the plain step.

    Averaging starts on a sign flip that does not shrink the step and lasts
    only while the path keeps flipping sign.
    """
    if step * last_step >= 0:
        return False
    return averaged or abs(step) >= OSCILLATION_RATIO * abs(last_step)


def _label(
    i: int,
    system: ClassifiedSystem,
    s: np.ndarray,
    borrowing: np.ndarray,
    demand: InverseDemand,
) -> BankRegime:
    case = system.case_of[i]
    if case == BankCase.CASE_I:
        return BankRegime.INSOLVENT
    if case == BankCase.CASE_II:
        return BankRegime.NO_ACTION
    if system.takeovers[i]:
        return BankRegime.TAKEN_OVER
    if s[i] <= SHARE_TOL * demand.market_cap:
        return BankRegime.PURE_BORROW
    if borrowing[i] <= 1e-9 * max(1.0, system.shortfalls[i]):
        return BankRegime.LIQUIDATE_ONLY
    return BankRegime.MIXED


def solve(
    network: FinancialNetwork,
    demand: InverseDemand,
    mode: BorrowingMode,
    nu: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    initial: Optional[np.ndarray] = None,
) -> EquilibriumResult:
    """
    Clearing liquidations, price and borrowing for one borrowing regime.

    Alternates the fixed-price inner equilibrium with the price update
    q <- f(sum s) until successive prices agree to `outer_tol`. Each inner
    loop is warm-started from the previous liquidations. If the uniqueness
    conditions fail the run still proceeds and the result is flagged.

    Args:
        network: Balance sheets and obligations
        demand: Inverse demand curve; M must cover every bank's holding
        mode: Uncollateralized or collateralized borrowing
        nu: Stress-test haircut (collateralized mode)
        config: Tolerances and caps
        initial: Optional warm-start liquidations

    Returns:
        EquilibriumResult with diagnostics
    """
    config = config or SolverConfig()
    system = classify(network, mode, nu)
    held = float(network.illiquid.sum())
    if held > demand.market_cap * (1 + 1e-12):
        raise InvalidParameterError(
            f"market cap {demand.market_cap} is below total illiquid holdings {held}"
        )

    uniqueness = validate_uniqueness(demand, system.nu)
    if not uniqueness.passed:
        logger.warning(
            f"Uniqueness conditions fail for {demand.label} (margin={uniqueness.margin:.4g}); "
            "solving anyway"
        )

    participants = system.participants
    h = system.shortfalls
    s = np.zeros(network.n)
    if initial is not None:
        s = np.where(participants, np.clip(np.asarray(initial, dtype=float), 0.0, network.illiquid), 0.0)
    q = demand.price(float(s.sum()))
    price_path = [q]
    outer_iters = inner_total = fallbacks = damped = 0

    if participants.any():
        delta, last_step, averaged = np.inf, 0.0, False
        for outer_iters in range(1, config.max_outer + 1):
            s, inner_iters, inner_fallbacks = _inner_loop(q, s, system, demand, config)
            inner_total += inner_iters
            fallbacks += inner_fallbacks
            implied = demand.price(float(s.sum()))
            step = implied - q
            delta = abs(step)
            logger.debug(f"outer {outer_iters}: q={implied:.12f} |dq|={delta:.3e} inner={inner_iters}")
            if delta <= config.outer_tol:
                q = implied
                price_path.append(q)
                break
            averaged = _should_average(step, last_step, averaged)
            if averaged:
                damped += 1
                q = q + 0.5 * step
            else:
                q = implied
            last_step = step
            price_path.append(q)
        else:
            raise NonConvergenceError(
                f"price iteration did not settle after {config.max_outer} steps (|dq|={delta:.3e})",
                stage="outer",
                iterations=config.max_outer,
                residual=delta,
            )
        s = np.minimum(s, upper_bounds(system, q))

    if fallbacks:
        logger.warning(f"Degenerate projected step replaced by fixed step {fallbacks} times")
    if damped:
        logger.warning(f"Price iteration oscillated; {damped} averaged outer steps")

    borrowing = np.where(participants, np.maximum(h - s * q, 0.0), 0.0)
    regimes = tuple(_label(i, system, s, borrowing, demand) for i in range(network.n))
    negative_equity = [
        int(i)
        for i in np.flatnonzero(participants)
        if borrowing[i] > network.illiquid[i] - s[i] + 1e-12 * demand.market_cap
    ]
    kkt = float(np.max(np.abs(g_map(s, q, system, demand)))) if network.n else 0.0

    s.setflags(write=False)
    borrowing.setflags(write=False)
    logger.info(
        f"{mode.value} equilibrium: q={q:.10f}, {int(participants.sum())} participants, "
        f"{outer_iters} outer / {inner_total} inner iterations"
    )
    return EquilibriumResult(
        mode=mode,
        liquidations=s,
        price=q,
        borrowing=borrowing,
        payments=system.payments,
        shortfalls=h,
        cases=system.case_of,
        regimes=regimes,
        outer_iters=outer_iters,
        inner_iters_total=inner_total,
        kkt_residual=kkt,
        price_path=price_path,
        fallback_steps=fallbacks,
        damped_steps=damped,
        conditions_violated=not uniqueness.passed,
        uniqueness_margin=uniqueness.margin,
        negative_equity_banks=negative_equity,
    )
