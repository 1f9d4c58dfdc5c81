# src/tasks/symmetric.py
"""Closed-form equilibria of symmetric systems under linear demand."""

import math

from src.exceptions import PreconditionError
from src.models.network import BorrowingMode
from src.models.scenario import (
    SymmetricEquilibrium,
    SymmetricRegime,
    SymmetricScenario,
    SymmetricThresholds,
)


def check_scenario(scenario: SymmetricScenario) -> None:
    """Raise PreconditionError unless every bank plays the borrowing game."""
    if scenario.h <= 0:
        raise PreconditionError(f"h={scenario.h}: banks with no shortfall take no action")
    if scenario.h > scenario.a:
        raise PreconditionError(
            f"h={scenario.h} > a={scenario.a}: banks are fundamentally insolvent"
        )
    if scenario.mode == BorrowingMode.COLLATERALIZED:
        nu = scenario.nu
        if nu is None or not 0 < nu < 1:
            raise PreconditionError(f"collateralized scenario needs nu in (0, 1), got {nu}")
        if scenario.a * (1 - nu) < scenario.h:
            raise PreconditionError(
                f"a(1-nu)={scenario.a * (1 - nu):.6g} < h={scenario.h}: banks fail the stress test"
            )


def closed_form(scenario: SymmetricScenario) -> SymmetricEquilibrium:
    """
    Per-bank liquidation and price of a symmetric system.

    Candidates are the liquidate-only root, the interior stationary point,
    the collateral cap (collateralized only) and the holding a. The smallest
    wins; exact ties go to the earlier candidate in that order.
    """
    check_scenario(scenario)
    n, h, a, r, alpha = scenario.n, scenario.h, scenario.a, scenario.r, scenario.alpha
    an = alpha * n

    disc = 1 - 4 * an * h
    liquidate_only = 2 * h / (1 + math.sqrt(disc)) if disc >= 0 else math.inf
    stationary = r / (alpha * (n + 1) * (1 + r))

    candidates = [
        (liquidate_only, SymmetricRegime.LIQUIDATE_ONLY),
        (stationary, SymmetricRegime.MIXED),
    ]
    if scenario.mode == BorrowingMode.COLLATERALIZED:
        candidates.append((math.sqrt((a - h) / an), SymmetricRegime.COLLATERAL_CAPPED))
    candidates.append((a, SymmetricRegime.ASSET_CAPPED))

    s, regime = min(candidates, key=lambda candidate: candidate[0])
    q = 1 - an * s
    return SymmetricEquilibrium(
        s_per_bank=s,
        q=q,
        regime=regime,
        borrowing_per_bank=max(h - s * q, 0.0),
        candidates={regime.value: value for value, regime in candidates},
    )


def thresholds(scenario: SymmetricScenario) -> SymmetricThresholds:
    """Shortfall levels at which the symmetric equilibrium switches regime."""
    n, a, r, alpha = scenario.n, scenario.a, scenario.r, scenario.alpha
    an = alpha * n
    inner = 1 - 2 * n * r / ((1 + r) * (n + 1))
    return SymmetricThresholds(
        h_liquidate_mixed=(1 - inner**2) / (4 * an),
        h_mixed_cap=a - n * r**2 / (alpha * (n + 1) ** 2 * (1 + r) ** 2),
        h_liquidate_cap=a * (1 - an * a),
        liquidate_cap_valid=an * a < 1,
    )
