# tests/conftest.py
"""Shared fixtures: random stressed networks, the two-bank system and a Prefect harness."""

import numpy as np
import pytest

from src.models.demand import InverseDemand
from src.models.network import FinancialNetwork
from src.models.results import SolverConfig

TIGHT = SolverConfig(outer_tol=1e-12, inner_tol=1e-12)


def random_network(rng: np.random.Generator, n: int) -> FinancialNetwork:
    """
    Sparse interbank network with no fundamentally insolvent bank.

    External liabilities are set so that each bank's shortfall at full
    payment is a random fraction of its illiquid holding.
    """
    illiquid = rng.uniform(1.0, 5.0, size=n)
    liquid = rng.uniform(0.0, 1.0, size=n)
    interbank = np.where(rng.random((n, n)) < 0.3, rng.uniform(0.0, 1.0, size=(n, n)), 0.0)
    np.fill_diagonal(interbank, 0.0)

    fraction = rng.uniform(0.05, 0.8, size=n)
    external = liquid + fraction * illiquid + interbank.sum(axis=0) - interbank.sum(axis=1)
    liabilities = np.column_stack([np.maximum(external, 0.0), interbank])
    return FinancialNetwork(
        liabilities=liabilities,
        liquid=liquid,
        illiquid=illiquid,
        rates=rng.uniform(0.01, 0.15, size=n),
    )


def random_case(rng: np.random.Generator, max_banks: int = 20):
    """(network, linear demand with M = total holdings and alpha*M in [0.05, 0.45])."""
    network = random_network(rng, int(rng.integers(2, max_banks + 1)))
    market_cap = float(network.illiquid.sum())
    alpha = rng.uniform(0.05, 0.45) / market_cap
    return network, InverseDemand.linear(alpha, market_cap)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def random_cases():
    """Fifty reproducible (network, demand) pairs with n <= 20."""
    generator = np.random.default_rng(7)
    return [random_case(generator) for _ in range(50)]


@pytest.fixture
def two_bank_network():
    """Shortfalls (4, 2), holdings 5 each, rates (0.12, 0.08)."""
    return FinancialNetwork.from_shortfalls([4.0, 2.0], 5.0, [0.12, 0.08])


@pytest.fixture
def two_bank_demand():
    return InverseDemand.linear(1 / 21, 10.0)


@pytest.fixture
def tight_config():
    return TIGHT


@pytest.fixture(scope="session")
def prefect_harness():
    """Temporary Prefect backend for flow runs."""
    from prefect.testing.utilities import prefect_test_harness

    with prefect_test_harness():
        yield
