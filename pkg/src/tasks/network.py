# src/tasks/network.py
"""Relative liabilities and the one-shot case partition of banks."""

import logging
from typing import Optional

import numpy as np

from src.exceptions import InvalidParameterError
from src.models.network import (
    BankCase,
    BorrowingMode,
    ClassifiedSystem,
    FinancialNetwork,
    RelativeLiabilities,
)

logger = logging.getLogger(__name__)


def relative_liabilities(network: FinancialNetwork) -> RelativeLiabilities:
    """pi_ij = L_ij / p-bar_i, with all-zero rows for banks that owe nothing."""
    pbar = network.total_liabilities
    pi = np.zeros_like(network.liabilities)
    owing = pbar > 0
    pi[owing] = network.liabilities[owing] / pbar[owing, None]
    pi.setflags(write=False)
    return RelativeLiabilities(pi=pi)


def check_haircut(mode: BorrowingMode, nu: Optional[float]) -> Optional[float]:
    """Return the haircut to use for `mode`; collateralized borrowing needs nu in (0, 1)."""
    if mode != BorrowingMode.COLLATERALIZED:
        return None
    if nu is None or not 0 < nu < 1:
        raise InvalidParameterError(f"collateralized mode needs a haircut nu in (0, 1), got {nu}")
    return float(nu)


def classify(
    network: FinancialNetwork,
    mode: BorrowingMode,
    nu: Optional[float] = None,
) -> ClassifiedSystem:
    """
    Split banks into Cases I-IV for one borrowing regime.

    Case I is decided from book values against full nominal interbank assets,
    so it does not cascade. Payments are then fixed (0 for Case I, p-bar
    otherwise) and the liquid shortfalls follow from those payments.

    Args:
        network: Balance sheets and obligations
        mode: Uncollateralized or collateralized borrowing
        nu: Stress-test haircut, required in collateralized mode

    Returns:
        ClassifiedSystem with labels, payments and shortfalls
    """
    nu = check_haircut(mode, nu)
    pbar = network.total_liabilities

    insolvent = pbar > network.liquid + network.illiquid + network.incoming_nominal
    payments = np.where(insolvent, 0.0, pbar)

    pi = relative_liabilities(network).interbank
    shortfalls = pbar - network.liquid - pi.T @ payments

    cases = []
    for i in range(network.n):
        if insolvent[i]:
            cases.append(BankCase.CASE_I)
        elif shortfalls[i] <= 0:
            cases.append(BankCase.CASE_II)
        elif mode == BorrowingMode.COLLATERALIZED and network.illiquid[i] * (1 - nu) >= shortfalls[i]:
            cases.append(BankCase.CASE_IV)
        else:
            cases.append(BankCase.CASE_III)

    payments.setflags(write=False)
    shortfalls.setflags(write=False)
    system = ClassifiedSystem(
        network=network,
        mode=mode,
        nu=nu,
        case_of=tuple(cases),
        payments=payments,
        shortfalls=shortfalls,
    )
    logger.debug(
        f"Classified {network.n} banks ({mode.value}): "
        + ", ".join(f"{case.value}={system.count(case)}" for case in BankCase)
    )
    return system
