# src/models/scenario.py
"""Scenario, symmetric-system, balance-sheet and sweep models."""

import math
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.exceptions import InvalidParameterError
from src.models.demand import InverseDemand
from src.models.network import BorrowingMode, FinancialNetwork


class Regime(str, Enum):
    FIRE_SALE = "fire_sale"
    UNCOLLATERALIZED = "uncollateralized"
    COLLATERALIZED = "collateralized"

    @property
    def borrowing_mode(self) -> Optional[BorrowingMode]:
        if self == Regime.FIRE_SALE:
            return None
        return BorrowingMode(self.value)


class SweepParameter(str, Enum):
    RATE = "rate"
    SHORTFALL = "shortfall"
    IMPACT = "alpha"


# ============================================================================
# SYMMETRIC SYSTEMS
# ============================================================================


class SymmetricRegime(str, Enum):
    LIQUIDATE_ONLY = "LiquidateOnly"
    MIXED = "Mixed"
    COLLATERAL_CAPPED = "CollateralCapped"
    ASSET_CAPPED = "AssetCapped"  # every bank sells its whole holding


class SymmetricScenario(BaseModel):
    """n identical banks with shortfall h, holding a, rate r, under linear demand 1 - alpha*s."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1)
    h: float = Field(..., ge=0)
    a: float = Field(..., ge=0)
    r: float = Field(..., ge=0)
    alpha: float = Field(..., gt=0)
    nu: Optional[float] = None
    mode: BorrowingMode = BorrowingMode.UNCOLLATERALIZED
    market_cap: Optional[float] = None  # defaults to n * a

    @model_validator(mode="after")
    def _market(self) -> "SymmetricScenario":
        if self.market_cap is not None and self.market_cap < self.n * self.a * (1 - 1e-12):
            raise InvalidParameterError(
                f"market cap {self.market_cap} is below total holdings {self.n * self.a}"
            )
        return self

    @property
    def total_shares(self) -> float:
        return self.market_cap if self.market_cap is not None else self.n * self.a

    def to_network(self) -> FinancialNetwork:
        return FinancialNetwork.from_shortfalls(np.full(self.n, self.h), self.a, self.r)

    def demand(self) -> InverseDemand:
        return InverseDemand.linear(self.alpha, self.total_shares)


class SymmetricEquilibrium(BaseModel):
    s_per_bank: float
    q: float
    regime: SymmetricRegime
    borrowing_per_bank: float
    candidates: Dict[str, float]  # s^L, s^0, s^b and a; inf when a root does not exist


class SymmetricThresholds(BaseModel):
    h_liquidate_mixed: float
    h_mixed_cap: float
    h_liquidate_cap: float
    liquidate_cap_valid: bool  # False when alpha*n*a >= 1


# ============================================================================
# BALANCE SHEETS
# ============================================================================


class BalanceSheetRow(BaseModel):
    """One bank's aggregate balance sheet as reported in stress-test disclosures."""

    bank_id: str
    total_assets: float
    capital: float
    interbank_liabilities: float
    tier1_ratio: float

    @model_validator(mode="after")
    def _consistent(self) -> "BalanceSheetRow":
        values = (self.total_assets, self.capital, self.interbank_liabilities, self.tier1_ratio)
        if not all(math.isfinite(v) for v in values):
            raise InvalidParameterError("all balance-sheet values must be finite")
        if min(self.total_assets, self.capital, self.interbank_liabilities) < 0:
            raise InvalidParameterError("balance-sheet amounts must be nonnegative")
        if not 0 <= self.tier1_ratio <= 1:
            raise InvalidParameterError(f"tier1_ratio {self.tier1_ratio} is outside [0, 1]")
        if self.total_assets < self.interbank_liabilities + self.capital:
            raise InvalidParameterError(
                "total_assets is below interbank_liabilities + capital (negative external liabilities)"
            )
        return self


class RejectedRow(BaseModel):
    row: int
    bank_id: Optional[str] = None
    reason: str


class BalanceSheets(BaseModel):
    """Stylized per-bank balance sheets derived from BalanceSheetRows."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bank_ids: List[str]
    liquid: np.ndarray
    illiquid: np.ndarray
    external: np.ndarray
    total_liabilities: np.ndarray
    interbank_out: np.ndarray
    interbank_in: np.ndarray

    @property
    def n(self) -> int:
        return len(self.bank_ids)

    @property
    def market_cap(self) -> float:
        return float(self.illiquid.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "bank_id": self.bank_ids,
                "liquid": self.liquid,
                "illiquid": self.illiquid,
                "external_liabilities": self.external,
                "total_liabilities": self.total_liabilities,
                "interbank_out": self.interbank_out,
                "interbank_in": self.interbank_in,
            }
        )


# ============================================================================
# SCENARIOS AND SWEEPS
# ============================================================================


class Scenario(BaseModel):
    """Everything a solver run needs besides the regime."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    network: FinancialNetwork
    demand: InverseDemand
    nu: Optional[float] = None
    symmetric: Optional[SymmetricScenario] = None

    @classmethod
    def from_symmetric(cls, scenario: SymmetricScenario) -> "Scenario":
        return cls(
            network=scenario.to_network(),
            demand=scenario.demand(),
            nu=scenario.nu,
            symmetric=scenario,
        )

    def with_parameter(self, parameter: SweepParameter, value: float) -> "Scenario":
        """Copy of this scenario with one scalar parameter replaced."""
        if parameter == SweepParameter.RATE:
            symmetric = self.symmetric.model_copy(update={"r": value}) if self.symmetric else None
            return Scenario(
                network=self.network.with_rates(value),
                demand=self.demand,
                nu=self.nu,
                symmetric=symmetric,
            )
        if parameter == SweepParameter.IMPACT:
            symmetric = self.symmetric.model_copy(update={"alpha": value}) if self.symmetric else None
            return Scenario(
                network=self.network,
                demand=self.demand.with_alpha(value),
                nu=self.nu,
                symmetric=symmetric,
            )
        if self.symmetric is None:
            raise InvalidParameterError("shortfall sweeps need a symmetric base scenario")
        return Scenario.from_symmetric(self.symmetric.model_copy(update={"h": value}))


class Metrics(BaseModel):
    price: float
    realized_loss: float = Field(..., ge=0)  # sum s_i (1 - q)
    mtm_loss: float = Field(..., ge=0)  # sum a_i (1 - q)
    interest_cost: float = Field(..., ge=0)  # sum r_i l_i
    defaults: int = Field(..., ge=0)


class SweepSpec(BaseModel):
    """One scalar parameter varied over a grid, compared across regimes."""

    model_config = ConfigDict(frozen=True)

    varied: SweepParameter
    lo: float
    hi: float
    steps: int = Field(..., ge=2)
    regimes: List[Regime] = Field(default_factory=lambda: list(Regime))
    allow_violations: bool = False

    @model_validator(mode="after")
    def _range(self) -> "SweepSpec":
        if not self.lo < self.hi:
            raise InvalidParameterError(f"sweep range needs lo < hi, got [{self.lo}, {self.hi}]")
        if not self.regimes:
            raise InvalidParameterError("sweep needs at least one regime")
        return self

    def values(self) -> List[float]:
        return [float(v) for v in np.linspace(self.lo, self.hi, self.steps)]

    def check_against(self, scenario: Scenario) -> None:
        """
        Reject sweeps the base scenario cannot run.

        Shortfall sweeps need a symmetric base. Impact sweeps must stay inside
        (0, 1/(2M)) unless violations are allowed.
        """
        if self.varied == SweepParameter.SHORTFALL and scenario.symmetric is None:
            raise InvalidParameterError(
                "shortfall sweeps need a symmetric base scenario (--n/--h/--a), not --network"
            )
        if self.varied != SweepParameter.IMPACT or self.allow_violations:
            return
        bound = 1.0 / (2.0 * scenario.demand.market_cap)
        if self.lo <= 0 or self.hi >= bound:
            raise InvalidParameterError(
                f"alpha sweep [{self.lo}, {self.hi}] leaves (0, {bound:.6g}); "
                "pass --allow-violations to run it anyway"
            )


class SweepRow(BaseModel):
    param: float
    regime: Regime
    price: float = math.nan
    realized_loss: float = math.nan
    mtm_loss: float = math.nan
    interest_cost: float = math.nan
    defaults: Optional[int] = None
    outer_iters: Optional[int] = None
    converged: bool = True
    error: Optional[str] = None
