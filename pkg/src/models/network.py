# src/models/network.py
"""Interbank network, relative liabilities and the case partition of banks."""

from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from src.exceptions import InvalidParameterError


def _frozen_array(value, ndim: int, name: str) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim != ndim:
        raise InvalidParameterError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidParameterError(f"{name} must be finite")
    if np.any(array < 0):
        raise InvalidParameterError(f"{name} must be nonnegative")
    array.setflags(write=False)
    return array


class BorrowingMode(str, Enum):
    UNCOLLATERALIZED = "uncollateralized"
    COLLATERALIZED = "collateralized"


class BankCase(str, Enum):
    CASE_I = "CaseI"  # fundamentally insolvent
    CASE_II = "CaseII"  # no action needed
    CASE_III = "CaseIII"  # needs funds (uncollateralized) / fails stress test (collateralized)
    CASE_IV = "CaseIV"  # needs funds and passes the stress test


class FinancialNetwork(BaseModel):
    """
    Balance sheets of n banks linked by nominal obligations.

    Column 0 of `liabilities` holds the external obligations L_{i0};
    column j >= 1 holds bank i's obligation to bank j.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    liabilities: np.ndarray
    liquid: np.ndarray
    illiquid: np.ndarray
    rates: np.ndarray

    @field_validator("liabilities", mode="before")
    @classmethod
    def _matrix(cls, value):
        return _frozen_array(value, 2, "liabilities")

    @field_validator("liquid", "illiquid", "rates", mode="before")
    @classmethod
    def _vector(cls, value, info):
        return _frozen_array(value, 1, info.field_name)

    @model_validator(mode="after")
    def _shapes(self) -> "FinancialNetwork":
        n = self.liquid.shape[0]
        if self.liabilities.shape != (n, n + 1):
            raise InvalidParameterError(
                f"liabilities must be {n}x{n + 1}, got {self.liabilities.shape}"
            )
        for name in ("illiquid", "rates"):
            if getattr(self, name).shape != (n,):
                raise InvalidParameterError(f"{name} must have length {n}")
        if np.any(np.diag(self.interbank) != 0):
            raise InvalidParameterError("a bank cannot owe itself (nonzero diagonal)")
        return self

    @classmethod
    def from_shortfalls(cls, shortfalls, illiquid, rates) -> "FinancialNetwork":
        """Network without interbank claims or cash whose liquid shortfalls are exactly `shortfalls`."""
        h = np.asarray(shortfalls, dtype=float)
        n = h.shape[0]
        liabilities = np.zeros((n, n + 1))
        liabilities[:, 0] = h
        return cls(
            liabilities=liabilities,
            liquid=np.zeros(n),
            illiquid=np.broadcast_to(np.asarray(illiquid, dtype=float), (n,)),
            rates=np.broadcast_to(np.asarray(rates, dtype=float), (n,)),
        )

    @property
    def n(self) -> int:
        return self.liquid.shape[0]

    @property
    def external(self) -> np.ndarray:
        return self.liabilities[:, 0]

    @property
    def interbank(self) -> np.ndarray:
        return self.liabilities[:, 1:]

    @property
    def total_liabilities(self) -> np.ndarray:
        """p-bar: row sums of the full liabilities matrix."""
        return self.liabilities.sum(axis=1)

    @property
    def incoming_nominal(self) -> np.ndarray:
        """Nominal interbank assets sum_j L_ji."""
        return self.interbank.sum(axis=0)

    def with_rates(self, rates) -> "FinancialNetwork":
        return self.model_copy(
            update={"rates": _frozen_array(np.broadcast_to(rates, (self.n,)), 1, "rates")}
        )


class RelativeLiabilities(BaseModel):
    """pi_ij = L_ij / p-bar_i (zero rows for banks without obligations)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pi: np.ndarray

    @property
    def interbank(self) -> np.ndarray:
        return self.pi[:, 1:]


class ClassifiedSystem(BaseModel):
    """Case labels, fixed payments and liquid shortfalls for one borrowing regime."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    network: FinancialNetwork
    mode: BorrowingMode
    nu: Optional[float] = None
    case_of: Tuple[BankCase, ...]
    payments: np.ndarray
    shortfalls: np.ndarray

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def participant_case(self) -> BankCase:
        if self.mode == BorrowingMode.COLLATERALIZED:
            return BankCase.CASE_IV
        return BankCase.CASE_III

    @property
    def participants(self) -> np.ndarray:
        """Mask of banks that optimize liquidations (C3 uncollateralized, C4 collateralized)."""
        return np.array([case == self.participant_case for case in self.case_of], dtype=bool)

    @property
    def takeovers(self) -> np.ndarray:
        """Collateralized Case III banks: taken over by the regulator, never sell."""
        if self.mode != BorrowingMode.COLLATERALIZED:
            return np.zeros(self.n, dtype=bool)
        return np.array([case == BankCase.CASE_III for case in self.case_of], dtype=bool)

    def count(self, case: BankCase) -> int:
        return sum(1 for c in self.case_of if c == case)
