# src/tasks/best_response.py
"""Single-bank optimal liquidation given the sales of every other bank."""

import logging
import math
from typing import Optional

from src.exceptions import ContractViolationError, PreconditionError
from src.models.demand import DemandKind, InverseDemand
from src.models.network import BorrowingMode
from src.tasks.roots import bracketed_root, safeguarded_newton

logger = logging.getLogger(__name__)

# Nonnegative share quantity, or math.inf when the defining root does not exist.
ExtendedShares = float

ROOT_XTOL = 1e-12  # absolute, in shares (scaled by M where noted)


def _room(s_other: float, demand: InverseDemand) -> float:
    """Largest sale still inside [0, M] once others sold `s_other`."""
    demand.price(s_other)  # domain check
    return max(demand.market_cap - s_other, 0.0)


def _within(root: float, smax: float, demand: InverseDemand) -> ExtendedShares:
    slack = ROOT_XTOL * demand.market_cap
    if root < -slack or root > smax + slack:
        return math.inf
    # rounding at the pure-borrowing threshold leaves roots a few ulps below zero
    return min(max(root, 0.0), smax)


def objective(s: float, s_other: float, h: float, r: float, demand: InverseDemand) -> float:
    """
    Cost of liquidating s shares: fire-sale discount plus interest on the borrowed remainder.

    s (1 - f(s_other + s)) + r (h - s f(s_other + s))^+
    """
    if s < 0:
        raise PreconditionError(f"liquidation must be nonnegative, got {s}")
    q = demand.price(s_other + s)
    return s * (1 - q) + r * max(h - s * q, 0.0)


def borrowing_need(s: float, s_other: float, h: float, demand: InverseDemand) -> float:
    """Amount left to borrow after selling s shares: (h - s f(s_other + s))^+."""
    return max(h - s * demand.price(s_other + s), 0.0)


# ============================================================================
# ROOTS
# ============================================================================


def liquidation_only_root(s_other: float, h: float, demand: InverseDemand) -> ExtendedShares:
    """
    Smallest s >= 0 with s f(s_other + s) = h: the sale that covers the shortfall alone.

    Returns math.inf when even selling up to M cannot raise h.
    """
    if h <= 0:
        raise PreconditionError(f"liquidation-only root needs a positive shortfall, got {h}")
    smax = _room(s_other, demand)

    if demand.kind == DemandKind.LINEAR:
        alpha = demand.alpha
        top = 1 - alpha * s_other
        disc = top * top - 4 * alpha * h
        if disc < 0:
            return math.inf
        # Rationalized smaller root of alpha s^2 - top s + h = 0
        return _within(2 * h / (top + math.sqrt(disc)), smax, demand)

    def proceeds_gap(s: float) -> float:
        return s * demand.price(s_other + s) - h

    if proceeds_gap(smax) < 0:
        return math.inf
    return bracketed_root(proceeds_gap, 0.0, smax, ROOT_XTOL * demand.market_cap)


def interior_stationary(s_other: float, r: float, demand: InverseDemand) -> ExtendedShares:
    """
    Root of 1 - (1 + r)(f + s f') at s_other + s: where selling one more share
    costs exactly what borrowing it would.

    Returns math.inf when there is no root in [0, M - s_other].
    """
    smax = _room(s_other, demand)

    if demand.kind == DemandKind.LINEAR:
        root = (r / (1 + r) - demand.alpha * s_other) / (2 * demand.alpha)
        return _within(root, smax, demand)

    def marginal(s: float) -> float:
        x = s_other + s
        return 1 - (1 + r) * (demand.price(x) + s * demand.slope(x))

    def marginal_prime(s: float) -> float:
        x = s_other + s
        return -(1 + r) * (2 * demand.slope(x) + s * demand.curvature(x))

    at_zero = marginal(0.0)
    if abs(at_zero) <= ROOT_XTOL:
        return 0.0
    if at_zero > 0 or marginal(smax) < 0:
        return math.inf
    return safeguarded_newton(marginal, marginal_prime, 0.0, smax, ROOT_XTOL)


def collateral_cap(s_other: float, a: float, h: float, demand: InverseDemand) -> ExtendedShares:
    """
    Root of s (1 - f(s_other + s)) = a - h: the largest sale after which the
    remaining holding at book value still covers the loan.
    """
    if a < h:
        raise PreconditionError(f"collateral cap needs a >= h, got a={a}, h={h}")
    headroom = a - h
    if headroom == 0:
        return 0.0
    smax = _room(s_other, demand)

    if demand.kind == DemandKind.LINEAR:
        ratio = headroom / demand.alpha
        root = 2 * ratio / (s_other + math.sqrt(s_other * s_other + 4 * ratio))
        return _within(root, smax, demand)

    def discount_gap(s: float) -> float:
        return s * (1 - demand.price(s_other + s)) - headroom

    if discount_gap(smax) < 0:
        return math.inf
    return bracketed_root(discount_gap, 0.0, smax, ROOT_XTOL * demand.market_cap)


def s0_derivative(s_other: float, r: float, demand: InverseDemand) -> float:
    """
    d s^0 / d s_other by implicit differentiation: -(f' + s f'') / (2 f' + s f'').

    NaN when s^0 does not exist at `s_other`.
    """
    s = interior_stationary(s_other, r, demand)
    if not math.isfinite(s):
        return math.nan
    x = s_other + s
    slope, curvature = demand.slope(x), demand.curvature(x)
    return -(slope + s * curvature) / (2 * slope + s * curvature)


# ============================================================================
# SELECTOR
# ============================================================================


def box_upper(
    a: float,
    h: float,
    q: float,
    mode: BorrowingMode,
) -> float:
    """
    Largest feasible sale at a fixed price q.

    min(a, h/q), and in collateralized mode also (a - h)/(1 - q), which is
    inactive at q = 1.
    """
    upper = min(a, h / q)
    if mode == BorrowingMode.COLLATERALIZED and q < 1:
        upper = min(upper, (a - h) / (1 - q))
    return max(upper, 0.0)


def best_response(
    s_other: float,
    a: float,
    h: float,
    r: float,
    demand: InverseDemand,
    mode: BorrowingMode,
    q_cap: Optional[float] = None,
    nu: Optional[float] = None,
) -> float:
    """
    Optimal liquidation of one participating bank.

    Args:
        s_other: Total shares sold by the other banks
        a: Illiquid holding
        h: Liquid shortfall (must be positive)
        r: Borrowing rate
        demand: Inverse demand curve
        mode: Borrowing regime
        q_cap: Fixed price for the constraint set; None uses the realized price
        nu: Stress-test haircut (collateralized mode)

    Returns:
        Liquidation s* in shares
    """
    if h <= 0:
        raise ContractViolationError(f"bank with shortfall {h} needs no funds and does not play")
    if mode == BorrowingMode.COLLATERALIZED and (nu is None or a * (1 - nu) < h):
        raise ContractViolationError(
            f"bank with a={a}, h={h} fails the stress test (nu={nu}) and is taken over"
        )

    if demand.price(s_other) < 1 / (1 + r):
        return 0.0

    stationary = interior_stationary(s_other, r, demand)
    if q_cap is not None:
        return min(stationary, box_upper(a, h, q_cap, mode))

    candidates = [liquidation_only_root(s_other, h, demand), stationary, a]
    if mode == BorrowingMode.COLLATERALIZED:
        candidates.append(collateral_cap(s_other, a, h, demand))
    return min(candidates)
