# src/models/results.py
"""Solver configuration and equilibrium / clearing result models."""

import os
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.exceptions import InvalidParameterError
from src.models.network import BankCase, BorrowingMode


class SolverConfig(BaseModel):
    """Tolerances and iteration caps for the clearing solvers."""

    model_config = ConfigDict(frozen=True)

    outer_tol: float = Field(1e-10, gt=0)  # price tolerance |q_{k+1} - q_k|
    inner_tol: float = Field(1e-10, gt=0)  # ||g||_inf stopping threshold
    max_outer: int = Field(10_000, ge=1)
    max_inner: int = Field(100_000, ge=1)

    @classmethod
    def from_env(cls) -> "SolverConfig":
        """Build a config from FIRESALE_* environment variables, falling back to defaults."""
        raw = {
            "outer_tol": os.getenv("FIRESALE_OUTER_TOL"),
            "inner_tol": os.getenv("FIRESALE_INNER_TOL"),
            "max_outer": os.getenv("FIRESALE_MAX_OUTER"),
            "max_inner": os.getenv("FIRESALE_MAX_INNER"),
        }
        try:
            return cls(**{key: value for key, value in raw.items() if value})
        except ValidationError as e:
            raise InvalidParameterError(f"Invalid FIRESALE_* solver settings: {e}") from e


class BankRegime(str, Enum):
    """What a bank ends up doing at the clearing point."""

    NO_ACTION = "NoAction"
    LIQUIDATE_ONLY = "LiquidateOnly"
    MIXED = "Mixed"
    PURE_BORROW = "PureBorrow"
    TAKEN_OVER = "TakenOver"
    INSOLVENT = "Insolvent"


class ResultDocument(BaseModel):
    """JSON shape shared by every solver mode."""

    mode: str
    price: float
    liquidations: List[float]
    borrowing: List[float]
    payments: List[float]
    cases: List[Optional[str]]
    regimes: List[str]
    iters: Dict[str, int]
    residuals: Dict[str, float]
    conditions_violated: bool
    diagnostics: Dict[str, Any] = Field(default_factory=dict)


def _floats(array: np.ndarray) -> List[float]:
    return [float(x) for x in array]


class EquilibriumResult(BaseModel):
    """Joint liquidation / price / borrowing equilibrium of a borrowing regime."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mode: BorrowingMode
    liquidations: np.ndarray
    price: float
    borrowing: np.ndarray
    payments: np.ndarray
    shortfalls: np.ndarray
    cases: Tuple[BankCase, ...]
    regimes: Tuple[BankRegime, ...]
    outer_iters: int
    inner_iters_total: int
    kkt_residual: float
    price_path: List[float]
    fallback_steps: int = 0
    damped_steps: int = 0
    conditions_violated: bool = False
    uniqueness_margin: Optional[float] = None
    negative_equity_banks: List[int] = Field(default_factory=list)

    @property
    def n(self) -> int:
        return self.liquidations.shape[0]

    def contraction_factor(self) -> Optional[float]:
        """
        Largest observed ratio |q_{k+1} - q_k| / |q_k - q_{k-1}| along the price path.

        Returns None when the path is too short to form a ratio.
        """
        steps = np.abs(np.diff(np.asarray(self.price_path)))
        ratios = [
            later / earlier
            for earlier, later in zip(steps[:-1], steps[1:])
            if earlier > 1e-8  # smaller steps are dominated by inner-loop tolerance
        ]
        return max(ratios) if ratios else None

    def to_document(self) -> ResultDocument:
        return ResultDocument(
            mode=self.mode.value,
            price=self.price,
            liquidations=_floats(self.liquidations),
            borrowing=_floats(self.borrowing),
            payments=_floats(self.payments),
            cases=[case.value for case in self.cases],
            regimes=[regime.value for regime in self.regimes],
            iters={"outer": self.outer_iters, "inner": self.inner_iters_total},
            residuals={"kkt": self.kkt_residual},
            conditions_violated=self.conditions_violated,
            diagnostics={
                "fallback_steps": self.fallback_steps,
                "damped_steps": self.damped_steps,
                "uniqueness_margin": self.uniqueness_margin,
                "negative_equity_banks": self.negative_equity_banks,
                "price_path": self.price_path,
            },
        )


class ClearingOutcome(BaseModel):
    """Pure fire-sale clearing point: payments, price and forced liquidations."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    payments: np.ndarray
    price: float
    liquidations: np.ndarray
    defaults: Tuple[int, ...]
    iterations: int
    residuals: Dict[str, float]
    regimes: Tuple[BankRegime, ...]

    @property
    def n(self) -> int:
        return self.payments.shape[0]

    def to_document(self) -> ResultDocument:
        return ResultDocument(
            mode="fire_sale",
            price=self.price,
            liquidations=_floats(self.liquidations),
            borrowing=[0.0] * self.n,
            payments=_floats(self.payments),
            cases=[None] * self.n,
            regimes=[regime.value for regime in self.regimes],
            iters={"outer": self.iterations, "inner": 0},
            residuals=self.residuals,
            conditions_violated=False,
            diagnostics={"defaults": list(self.defaults)},
        )
