# src/tasks/inverse_demand.py
"""Shape checks for inverse demand curves and the --idf parser."""

import logging
import math
from fractions import Fraction
from typing import Optional

import numpy as np

from src.exceptions import InvalidParameterError
from src.models.demand import (
    Assumption1Report,
    ClauseCheck,
    DemandKind,
    InverseDemand,
    UniquenessReport,
)
from src.tasks.roots import lambert_w1

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 10_001
GOLDEN_RATIO = (1 + math.sqrt(5)) / 2

_KIND_ALIASES = {
    "linear": DemandKind.LINEAR,
    "lin": DemandKind.LINEAR,
    "exp": DemandKind.EXPONENTIAL,
    "exponential": DemandKind.EXPONENTIAL,
    "hyp": DemandKind.HYPERBOLIC,
    "hyperbolic": DemandKind.HYPERBOLIC,
}


def sample_grid(demand: InverseDemand, grid_size: int = DEFAULT_GRID_SIZE):
    """Evenly spaced shares on [0, M] with price, slope and curvature sampled on them."""
    if grid_size < 2:
        raise InvalidParameterError(f"grid needs at least 2 points, got {grid_size}")
    s = np.linspace(0.0, demand.market_cap, grid_size)
    price = np.array([demand.price(x) for x in s])
    slope = np.array([demand.slope(x) for x in s])
    curvature = np.array([demand.curvature(x) for x in s])
    return s, price, slope, curvature


def _clause(name: str, values: np.ndarray, at: np.ndarray, strict: bool, tol: float = 0.0) -> ClauseCheck:
    """Check `values > 0` (strict) or `values >= -tol` and locate the worst point."""
    worst = int(np.argmin(values))
    ok = bool(np.all(values > 0)) if strict else bool(np.all(values >= -tol))
    return ClauseCheck(name=name, passed=ok, worst_value=float(values[worst]), worst_at=float(at[worst]))


# ============================================================================
# STANDING ASSUMPTIONS
# ============================================================================


def _analytic_assumption1(demand: InverseDemand) -> Optional[bool]:
    m = demand.market_cap
    if demand.kind == DemandKind.LINEAR:
        return 0 < demand.alpha < 1 / (2 * m)
    if demand.kind == DemandKind.EXPONENTIAL:
        return 0 < demand.alpha < 1 / m
    if demand.kind == DemandKind.HYPERBOLIC:
        return demand.eps > 0
    return None


def validate_assumption1(demand: InverseDemand, grid_size: int = DEFAULT_GRID_SIZE) -> Assumption1Report:
    """
    Check the standing shape assumptions on a uniform grid of [0, M].

    Clauses: f(0) = 1, f strictly decreasing, f(M) > 0, f' nondecreasing,
    s f(s) strictly increasing (f + s f' > 0) and 2 f' + s f'' < 0. The
    named families additionally get their closed-form parameter ranges.

    Args:
        demand: Inverse demand curve to check
        grid_size: Number of grid points, endpoints included

    Returns:
        Assumption1Report with one ClauseCheck per clause
    """
    s, price, slope, curvature = sample_grid(demand, grid_size)
    # Grid differences of a smooth slope can jitter by rounding; scale the slack to |f'|.
    slope_tol = 1e-12 * max(1.0, float(np.max(np.abs(slope))))
    mids = s[1:]

    clauses = [
        ClauseCheck(
            name="f(0)=1",
            passed=abs(price[0] - 1.0) <= 1e-12,
            worst_value=float(price[0] - 1.0),
            worst_at=0.0,
        ),
        _clause("f strictly decreasing", -np.diff(price), mids, strict=True),
        _clause("f(M)>0", price[-1:], s[-1:], strict=True),
        _clause("f' nondecreasing", np.diff(slope), mids, strict=False, tol=slope_tol),
        _clause("s*f(s) strictly increasing", price + s * slope, s, strict=True),
        _clause("2f'+s*f''<0", -(2 * slope + s * curvature), s, strict=True),
    ]
    report = Assumption1Report(
        demand=demand.label,
        grid_size=grid_size,
        clauses=clauses,
        analytic_passed=_analytic_assumption1(demand),
    )
    if not report.passed:
        logger.warning(f"{demand.label} violates shape assumptions: {', '.join(report.failed()) or 'analytic range'}")
    return report


# ============================================================================
# UNIQUENESS
# ============================================================================


def analytic_threshold(demand: InverseDemand, nu: Optional[float] = None) -> Optional[float]:
    """
    Closed-form bound on the family parameter for a unique equilibrium.

    Linear and exponential: alpha must stay below the returned value.
    Hyperbolic: eps must exceed it. Custom curves have no closed form.
    """
    m = demand.market_cap
    if demand.kind == DemandKind.LINEAR:
        bound = 1 / (2 * m)
    elif demand.kind == DemandKind.EXPONENTIAL:
        bound = lambert_w1() / m
    elif demand.kind == DemandKind.HYPERBOLIC:
        bound = GOLDEN_RATIO * m
        return bound if nu is None else max(bound, m / nu)
    else:
        return None
    return bound if nu is None else min(bound, nu / m)


def _analytic_uniqueness(demand: InverseDemand, nu: Optional[float]) -> Optional[bool]:
    threshold = analytic_threshold(demand, nu)
    if threshold is None:
        return None
    if demand.kind == DemandKind.HYPERBOLIC:
        return demand.eps > threshold
    return demand.alpha < threshold


def validate_uniqueness(
    demand: InverseDemand,
    nu: Optional[float] = None,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> UniquenessReport:
    """
    Sufficient conditions for a unique clearing equilibrium.

    f' + s f'' <= 0 on the grid and the contraction margin
    (nu ^ f(M)) + M f'(0) > 0; without a haircut the margin uses f(M) alone.
    """
    s, price, slope, curvature = sample_grid(demand, grid_size)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(slope))))
    curvature_condition = _clause(
        "f'+s*f''<=0", -(slope + s * curvature), s, strict=False, tol=slack
    )

    cap = price[-1] if nu is None else min(nu, price[-1])
    margin = float(cap + demand.market_cap * slope[0])

    report = UniquenessReport(
        demand=demand.label,
        nu=nu,
        curvature_condition=curvature_condition,
        margin=margin,
        analytic_threshold=analytic_threshold(demand, nu),
        analytic_passed=_analytic_uniqueness(demand, nu),
    )
    logger.debug(f"Uniqueness check for {demand.label} (nu={nu}): margin={margin:.6g}, passed={report.passed}")
    return report


# ============================================================================
# PARSING
# ============================================================================


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise InvalidParameterError(f"'{text}' is not a number") from e


def parse_idf(text: str, market_cap: float) -> InverseDemand:
    """
    Parse `linear:alpha=1/210`, `exp:alpha=0.005` or `hyp:eps=200`.

    Values may be decimals or fractions.
    """
    kind_text, _, params_text = text.partition(":")
    kind = _KIND_ALIASES.get(kind_text.strip().lower())
    if kind is None:
        raise InvalidParameterError(
            f"unknown inverse demand '{kind_text}' (expected linear, exp or hyp)"
        )

    params = {}
    for item in filter(None, (p.strip() for p in params_text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidParameterError(f"expected key=value in '{item}'")
        params[key.strip().lower()] = _number(value)

    expected = "eps" if kind == DemandKind.HYPERBOLIC else "alpha"
    if set(params) != {expected}:
        raise InvalidParameterError(f"{kind.value} demand takes exactly one parameter '{expected}'")

    if kind == DemandKind.LINEAR:
        return InverseDemand.linear(params["alpha"], market_cap)
    if kind == DemandKind.EXPONENTIAL:
        return InverseDemand.exponential(params["alpha"], market_cap)
    return InverseDemand.hyperbolic(params["eps"], market_cap)
