# src/models/demand.py
"""Inverse demand functions for the illiquid asset."""

import math
from enum import Enum
from typing import Callable, List, Optional

from pydantic import BaseModel, ConfigDict, model_validator

from src.exceptions import DomainError, InvalidParameterError

# Relative slack when checking s against [0, M]; sums of clamped sales can overshoot by an ulp.
DOMAIN_SLACK = 1e-12


class DemandKind(str, Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exp"
    HYPERBOLIC = "hyp"
    CUSTOM = "custom"


class InverseDemand(BaseModel):
    """
    Price f(s) of the illiquid asset after s shares are sold in aggregate.

    f(0) = 1 and the function is defined on [0, M] where M is the market
    capitalization in shares. Custom families supply price, slope and
    curvature callables.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: DemandKind
    market_cap: float
    alpha: Optional[float] = None
    eps: Optional[float] = None
    custom_price: Optional[Callable[[float], float]] = None
    custom_slope: Optional[Callable[[float], float]] = None
    custom_curvature: Optional[Callable[[float], float]] = None

    @model_validator(mode="after")
    def _parameters(self) -> "InverseDemand":
        if not (math.isfinite(self.market_cap) and self.market_cap > 0):
            raise InvalidParameterError(f"market capitalization must be positive, got {self.market_cap}")
        if self.kind in (DemandKind.LINEAR, DemandKind.EXPONENTIAL):
            if self.alpha is None or not self.alpha > 0:
                raise InvalidParameterError(f"{self.kind.value} demand needs alpha > 0")
        elif self.kind == DemandKind.HYPERBOLIC:
            if self.eps is None or not self.eps > 0:
                raise InvalidParameterError("hyperbolic demand needs eps > 0")
        elif None in (self.custom_price, self.custom_slope, self.custom_curvature):
            raise InvalidParameterError("custom demand needs price, slope and curvature callables")
        return self

    @classmethod
    def linear(cls, alpha: float, market_cap: float) -> "InverseDemand":
        return cls(kind=DemandKind.LINEAR, alpha=alpha, market_cap=market_cap)

    @classmethod
    def exponential(cls, alpha: float, market_cap: float) -> "InverseDemand":
        return cls(kind=DemandKind.EXPONENTIAL, alpha=alpha, market_cap=market_cap)

    @classmethod
    def hyperbolic(cls, eps: float, market_cap: float) -> "InverseDemand":
        return cls(kind=DemandKind.HYPERBOLIC, eps=eps, market_cap=market_cap)

    @classmethod
    def custom(
        cls,
        price: Callable[[float], float],
        slope: Callable[[float], float],
        curvature: Callable[[float], float],
        market_cap: float,
    ) -> "InverseDemand":
        return cls(
            kind=DemandKind.CUSTOM,
            market_cap=market_cap,
            custom_price=price,
            custom_slope=slope,
            custom_curvature=curvature,
        )

    def with_market_cap(self, market_cap: float) -> "InverseDemand":
        return self.model_validate({**self.__dict__, "market_cap": market_cap})

    def with_alpha(self, alpha: float) -> "InverseDemand":
        if self.kind not in (DemandKind.LINEAR, DemandKind.EXPONENTIAL):
            raise InvalidParameterError(f"{self.kind.value} demand has no alpha parameter")
        return self.model_validate({**self.__dict__, "alpha": alpha})

    @property
    def label(self) -> str:
        if self.kind == DemandKind.HYPERBOLIC:
            return f"hyp:eps={self.eps:g}"
        if self.kind == DemandKind.CUSTOM:
            return "custom"
        return f"{self.kind.value}:alpha={self.alpha:g}"

    def _check(self, s: float) -> float:
        slack = DOMAIN_SLACK * self.market_cap
        if not (-slack <= s <= self.market_cap + slack):
            raise DomainError(f"{s} shares is outside [0, {self.market_cap}]")
        return min(max(s, 0.0), self.market_cap)

    def price(self, s: float) -> float:
        s = self._check(s)
        if self.kind == DemandKind.LINEAR:
            return 1.0 - self.alpha * s
        if self.kind == DemandKind.EXPONENTIAL:
            return math.exp(-self.alpha * s)
        if self.kind == DemandKind.HYPERBOLIC:
            return self.eps / (self.eps + s)
        return float(self.custom_price(s))

    def slope(self, s: float) -> float:
        s = self._check(s)
        if self.kind == DemandKind.LINEAR:
            return -self.alpha
        if self.kind == DemandKind.EXPONENTIAL:
            return -self.alpha * math.exp(-self.alpha * s)
        if self.kind == DemandKind.HYPERBOLIC:
            return -self.eps / (self.eps + s) ** 2
        return float(self.custom_slope(s))

    def curvature(self, s: float) -> float:
        s = self._check(s)
        if self.kind == DemandKind.LINEAR:
            return 0.0
        if self.kind == DemandKind.EXPONENTIAL:
            return self.alpha**2 * math.exp(-self.alpha * s)
        if self.kind == DemandKind.HYPERBOLIC:
            return 2.0 * self.eps / (self.eps + s) ** 3
        return float(self.custom_curvature(s))


class ClauseCheck(BaseModel):
    """Outcome of one condition checked over the sample grid."""

    name: str
    passed: bool
    worst_value: float
    worst_at: float


class Assumption1Report(BaseModel):
    demand: str
    grid_size: int
    clauses: List[ClauseCheck]
    analytic_passed: Optional[bool] = None  # None for custom families

    @property
    def passed(self) -> bool:
        grid_ok = all(clause.passed for clause in self.clauses)
        return grid_ok and self.analytic_passed is not False

    def failed(self) -> List[str]:
        return [clause.name for clause in self.clauses if not clause.passed]


class UniquenessReport(BaseModel):
    demand: str
    nu: Optional[float] = None
    curvature_condition: ClauseCheck
    margin: float  # (nu ^ f(M)) + M f'(0); positive means the price map contracts
    analytic_threshold: Optional[float] = None
    analytic_passed: Optional[bool] = None

    @property
    def passed(self) -> bool:
        return self.curvature_condition.passed and self.margin > 0
