# src/tasks/roots.py
"""Scalar root finding on bracketed intervals (scipy.optimize)."""

import logging
import math
from typing import Callable

from scipy.optimize import brentq, root_scalar

from src.exceptions import DomainError, NonConvergenceError, PreconditionError

logger = logging.getLogger(__name__)

MAX_BRACKET_ITERS = 500
MAX_NEWTON_ITERS = 50


def bracketed_root(
    func: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float,
) -> float:
    """
    Root of `func` on [lo, hi] given a sign change between the endpoints.

    Endpoint roots are returned as is. Uses Brent's method, which keeps the
    bisection guarantee of never leaving the bracket.
    """
    f_lo = func(lo)
    if f_lo == 0:
        return lo
    f_hi = func(hi)
    if f_hi == 0:
        return hi
    if f_lo * f_hi > 0:
        raise PreconditionError(f"no sign change on [{lo}, {hi}]: f={f_lo:.3g}, {f_hi:.3g}")

    root, info = brentq(
        func, lo, hi, xtol=xtol, maxiter=MAX_BRACKET_ITERS, full_output=True, disp=False
    )
    if not info.converged:
        raise NonConvergenceError(
            f"bracketed root search on [{lo}, {hi}] did not converge",
            stage="root",
            iterations=info.iterations,
        )
    return float(root)


def safeguarded_newton(
    func: Callable[[float], float],
    fprime: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float,
) -> float:
    """
    Newton's method started from the bracket midpoint, falling back to Brent.

    The Newton result is only accepted if it converged inside [lo, hi].
    """
    x0 = 0.5 * (lo + hi)
    try:
        sol = root_scalar(
            func, fprime=fprime, x0=x0, method="newton", xtol=xtol, maxiter=MAX_NEWTON_ITERS
        )
        if sol.converged and lo <= sol.root <= hi and math.isfinite(sol.root):
            return float(sol.root)
    except (DomainError, RuntimeError, ZeroDivisionError, OverflowError):
        pass
    logger.debug(f"Newton step left [{lo:.6g}, {hi:.6g}], falling back to bracketing")
    return bracketed_root(func, lo, hi, xtol)


def lambert_w1() -> float:
    """Omega constant W(1), the root of x e^x = 1 on [0, 1]."""
    return bracketed_root(lambda x: x * math.exp(x) - 1.0, 0.0, 1.0, 1e-15)
