# src/exceptions.py
"""Error hierarchy shared by the solvers, the loaders and the CLI."""

from typing import Optional


class FireSaleError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(FireSaleError):
    """
    Invalid input: bad parameter, malformed row or inconsistent network.

    Not a ValueError: pydantic validators propagate it unwrapped.
    """


class DomainError(InvalidParameterError):
    """Inverse demand evaluated outside [0, M]."""


class PreconditionError(InvalidParameterError):
    """A root finder was called outside the region where its root is defined."""


class ContractViolationError(InvalidParameterError):
    """A best response was requested for a bank that does not take part in the game."""


class NonConvergenceError(FireSaleError, RuntimeError):
    """An iteration hit its cap before reaching tolerance."""

    def __init__(
        self,
        message: str,
        *,
        stage: str,
        iterations: int,
        residual: Optional[float] = None,
    ):
        super().__init__(message)
        self.stage = stage
        self.iterations = iterations
        self.residual = residual
