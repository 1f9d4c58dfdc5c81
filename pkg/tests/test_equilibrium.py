# tests/test_equilibrium.py
"""Fixed-price game, outer price iteration and the properties of the clearing point."""

import itertools

import numpy as np
import pytest

from src.exceptions import InvalidParameterError, NonConvergenceError
from src.models.demand import DemandKind, InverseDemand
from src.models.network import BankCase, BorrowingMode, FinancialNetwork
from src.models.results import BankRegime, SolverConfig
from src.models.scenario import SymmetricScenario
from src.tasks.equilibrium import _should_average, g_map, inner_equilibrium, jacobian_G, solve
from src.tasks.fire_sale import clear
from src.tasks.inverse_demand import validate_uniqueness
from src.tasks.network import classify
from src.tasks.symmetric import closed_form

UNCOLL = BorrowingMode.UNCOLLATERALIZED
COLL = BorrowingMode.COLLATERALIZED
NU = 0.5

# Interior equilibrium of the two-bank system: S + s_i = r_i / (alpha (1 + r_i)).
TWO_BANK_S = np.array([0.98148148148, 0.28703703704])
TWO_BANK_Q = 1 - TWO_BANK_S.sum() / 21


def _grid_price(demand, x):
    if demand.kind == DemandKind.LINEAR:
        return 1 - demand.alpha * x
    if demand.kind == DemandKind.EXPONENTIAL:
        return np.exp(-demand.alpha * x)
    return demand.eps / (demand.eps + x)


def _grid_cost(x, s_other, h, r, demand):
    """Vectorized single-bank cost."""
    q = _grid_price(demand, s_other + x)
    return x * (1 - q) + r * np.maximum(h - x * q, 0.0), q


def _alternating_best_response(h, a, r, demand, points=100_001, tol=1e-7):
    grid = np.linspace(0.0, a, points)
    s = np.zeros(len(h))
    for _ in range(200):
        previous = s.copy()
        for i in range(len(h)):
            cost, _ = _grid_cost(grid, s.sum() - s[i], h[i], r[i], demand)
            s[i] = grid[np.argmin(cost)]
        if np.max(np.abs(s - previous)) < tol:
            break
    return s


def _unstressed(n):
    """Banks whose cash covers their external obligations."""
    liabilities = np.zeros((n, n + 1))
    liabilities[:, 0] = 1.0
    return FinancialNetwork(
        liabilities=liabilities,
        liquid=np.full(n, 1.5),
        illiquid=np.full(n, 2.0),
        rates=np.full(n, 0.1),
    )


def _max_gain(result, network, demand, nu=None, points=10_000):
    """Largest cost reduction any participant gets from a feasible unilateral deviation."""
    system = classify(network, result.mode, nu)
    s = result.liquidations
    worst = 0.0
    for i in np.flatnonzero(system.participants):
        a, h, r = network.illiquid[i], system.shortfalls[i], network.rates[i]
        s_other = s.sum() - s[i]
        grid = np.linspace(0.0, a, points)
        cost, q = _grid_cost(grid, s_other, h, r, demand)
        if result.mode == COLL:
            feasible = grid * (1 - q) <= (a - h) + 1e-12
            cost = cost[feasible]
        current, _ = _grid_cost(np.array([s[i]]), s_other, h, r, demand)
        worst = max(worst, float(current[0] - cost.min()))
    return worst


# ============================================================================
# FIXED-PRICE GAME
# ============================================================================


def test_jacobian_linear_two_banks(two_bank_network, two_bank_demand):
    system = classify(two_bank_network, UNCOLL)
    G = jacobian_G(np.array([0.3, 0.2]), system, two_bank_demand)
    np.testing.assert_allclose(G, np.array([[2.0, 1.0], [1.0, 2.0]]) / 21)


def test_jacobian_zero_without_participants():
    network = _unstressed(2)
    system = classify(network, UNCOLL)
    demand = InverseDemand.linear(0.01, 6.0)
    np.testing.assert_array_equal(jacobian_G(np.zeros(2), system, demand), np.zeros((2, 2)))


@pytest.mark.parametrize(
    "demand",
    [
        InverseDemand.linear(1 / 210, 100.0),
        InverseDemand.exponential(0.5 / 100.0, 100.0),
        InverseDemand.hyperbolic(200.0, 100.0),
    ],
    ids=lambda d: d.kind.value,
)
def test_symmetric_part_of_G_is_positive_definite(demand, rng):
    n = 5
    network = FinancialNetwork.from_shortfalls(np.full(n, 1.0), 100.0 / n, rng.uniform(0.01, 0.2, n))
    system = classify(network, UNCOLL)
    for _ in range(100):
        s = rng.uniform(0.0, 100.0 / n, n)
        G = jacobian_G(s, system, demand)
        assert np.linalg.eigvalsh(G + G.T).min() > 0


def test_g_map_vanishes_at_stationary_point(two_bank_network, two_bank_demand):
    system = classify(two_bank_network, UNCOLL)
    g = g_map(TWO_BANK_S, 1.0, system, two_bank_demand)
    np.testing.assert_allclose(g, 0.0, atol=1e-9)


def test_g_map_zero_for_non_participants():
    network = FinancialNetwork(
        liabilities=[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
        liquid=[0.0, 2.0],
        illiquid=[2.0, 2.0],
        rates=[0.1, 0.1],
    )
    system = classify(network, UNCOLL)
    g = g_map(np.array([0.5, 0.0]), 1.0, system, InverseDemand.linear(0.1, 4.0))
    assert g[1] == 0.0
    assert g[0] != 0.0


def test_inner_equilibrium_no_participants_is_zero():
    network = _unstressed(2)
    system = classify(network, UNCOLL)
    s = inner_equilibrium(1.0, system, InverseDemand.linear(0.1, 4.0))
    np.testing.assert_array_equal(s, [0.0, 0.0])


def test_inner_equilibrium_matches_grid_oracle_at_par(two_bank_network, two_bank_demand):
    system = classify(two_bank_network, UNCOLL)
    s = inner_equilibrium(1.0, system, two_bank_demand)
    oracle = _alternating_best_response([4.0, 2.0], 5.0, [0.12, 0.08], two_bank_demand)
    np.testing.assert_allclose(s, oracle, atol=1e-4)


def test_inner_equilibrium_rejects_price_outside_range(two_bank_network, two_bank_demand):
    system = classify(two_bank_network, UNCOLL)
    with pytest.raises(InvalidParameterError):
        inner_equilibrium(1.5, system, two_bank_demand)


# ============================================================================
# SOLVER
# ============================================================================


def test_two_bank_interior_equilibrium(two_bank_network, two_bank_demand):
    result = solve(two_bank_network, two_bank_demand, UNCOLL)
    np.testing.assert_allclose(result.liquidations, TWO_BANK_S, atol=1e-8)
    assert result.price == pytest.approx(TWO_BANK_Q, abs=1e-8)
    np.testing.assert_allclose(result.borrowing, [4.0, 2.0] - TWO_BANK_S * result.price)
    assert result.regimes == (BankRegime.MIXED, BankRegime.MIXED)
    assert not result.conditions_violated
    assert result.kkt_residual <= 1e-9


def test_two_bank_unique_from_warm_starts(two_bank_network, two_bank_demand):
    starts = itertools.product(np.linspace(0.0, 5.0, 5), repeat=2)
    points = np.array(
        [
            [*solve(two_bank_network, two_bank_demand, UNCOLL, initial=np.array(start)).liquidations]
            for start in starts
        ]
    )
    assert points.shape == (25, 2)
    assert np.max(points.max(axis=0) - points.min(axis=0)) < 1e-6
    oracle = _alternating_best_response([4.0, 2.0], 5.0, [0.12, 0.08], two_bank_demand)
    np.testing.assert_allclose(points[0], oracle, atol=1e-4)


def test_symmetric_mixed_point():
    scenario = SymmetricScenario(n=90, h=1.0, a=10 / 9, r=0.05, alpha=1 / 210, market_cap=100.0)
    result = solve(scenario.to_network(), scenario.demand(), UNCOLL)
    assert result.price == pytest.approx(0.9529043, abs=1e-6)
    np.testing.assert_allclose(result.liquidations, 0.109890, atol=1e-6)
    np.testing.assert_allclose(result.borrowing, 0.895285, atol=1e-6)


def test_unstressed_network_has_no_fire_sale():
    network = _unstressed(3)
    result = solve(network, InverseDemand.linear(0.05, 6.0), UNCOLL)
    assert result.price == 1.0
    assert result.outer_iters == 0
    np.testing.assert_array_equal(result.liquidations, 0.0)
    np.testing.assert_array_equal(result.borrowing, 0.0)
    assert set(result.regimes) == {BankRegime.NO_ACTION}


def test_collateralized_equals_uncollateralized_when_caps_slack(two_bank_network, two_bank_demand):
    coll = solve(two_bank_network, two_bank_demand, COLL, nu=0.1)
    uncoll = solve(two_bank_network, two_bank_demand, UNCOLL)
    assert coll.cases == (BankCase.CASE_IV, BankCase.CASE_IV)
    np.testing.assert_allclose(coll.liquidations, uncoll.liquidations, atol=1e-9)
    # nu = 0.1 is below M |f'(0)|, so the sufficient conditions fail but the run still converges
    assert coll.conditions_violated


def test_collateralized_takeover_never_sells(two_bank_network, two_bank_demand):
    result = solve(two_bank_network, two_bank_demand, COLL, nu=0.5)
    assert result.cases == (BankCase.CASE_III, BankCase.CASE_IV)
    assert result.regimes[0] == BankRegime.TAKEN_OVER
    assert result.liquidations[0] == 0.0
    assert result.borrowing[0] == 0.0
    # the remaining bank plays alone: s = r / (2 alpha (1 + r))
    assert result.liquidations[1] == pytest.approx(0.08 / 1.08 * 21 / 2, abs=1e-8)


def test_collateral_cap_reached_with_price_averaging(tight_config):
    scenario = SymmetricScenario(n=2, h=0.95, a=1.0, r=0.5, alpha=0.2, nu=0.04, mode=COLL)
    oracle = closed_form(scenario)
    assert oracle.regime.value == "CollateralCapped"

    result = solve(scenario.to_network(), scenario.demand(), COLL, nu=0.04, config=tight_config)
    assert result.damped_steps > 0
    assert result.conditions_violated
    assert result.price == pytest.approx(oracle.q, abs=1e-8)
    np.testing.assert_allclose(result.liquidations, oracle.s_per_bank, atol=1e-8)


@pytest.mark.parametrize(
    "step, last_step, averaged, expected",
    [
        (-0.02, 0.02, False, True),
        (-0.001, 0.02, False, False),
        (-0.001, 0.02, True, True),
        (0.001, 0.02, True, False),
        (0.02, 0.0, False, False),
    ],
)
def test_averaging_lasts_only_while_price_path_alternates(step, last_step, averaged, expected):
    assert _should_average(step, last_step, averaged) is expected


def test_contracting_price_map_is_never_averaged(two_bank_network, two_bank_demand, tight_config):
    result = solve(two_bank_network, two_bank_demand, UNCOLL, config=tight_config)
    assert result.damped_steps == 0


def test_conditions_violated_flag_for_steep_demand(two_bank_network):
    result = solve(two_bank_network, InverseDemand.linear(1 / 15, 10.0), UNCOLL)
    assert result.conditions_violated
    assert result.uniqueness_margin < 0


def test_market_cap_must_cover_holdings(two_bank_network):
    with pytest.raises(InvalidParameterError, match="market cap"):
        solve(two_bank_network, InverseDemand.linear(0.01, 5.0), UNCOLL)


def test_outer_iteration_cap(two_bank_network, two_bank_demand):
    with pytest.raises(NonConvergenceError) as excinfo:
        solve(two_bank_network, two_bank_demand, UNCOLL, config=SolverConfig(max_outer=1))
    assert excinfo.value.stage == "outer"
    assert excinfo.value.residual > 0


def test_inner_iteration_cap(two_bank_network, two_bank_demand):
    with pytest.raises(NonConvergenceError) as excinfo:
        solve(two_bank_network, two_bank_demand, UNCOLL, config=SolverConfig(max_inner=1))
    assert excinfo.value.stage == "inner"
    assert excinfo.value.iterations == 1


def test_result_document_shape(two_bank_network, two_bank_demand):
    document = solve(two_bank_network, two_bank_demand, UNCOLL).to_document()
    assert document.mode == "uncollateralized"
    assert document.cases == ["CaseIII", "CaseIII"]
    assert set(document.iters) == {"outer", "inner"}
    assert "kkt" in document.residuals
    assert document.diagnostics["damped_steps"] == 0


# ============================================================================
# PROPERTIES ON RANDOM NETWORKS
# ============================================================================


SHAPES = [DemandKind.LINEAR, DemandKind.EXPONENTIAL, DemandKind.HYPERBOLIC]


def _reshaped(demand, kind):
    """Same market and initial slope as the linear curve: alpha M <= 0.45, eps = 1/alpha >= 2M."""
    if kind == DemandKind.EXPONENTIAL:
        return InverseDemand.exponential(demand.alpha, demand.market_cap)
    if kind == DemandKind.HYPERBOLIC:
        return InverseDemand.hyperbolic(1 / demand.alpha, demand.market_cap)
    return demand


@pytest.mark.parametrize("kind", SHAPES, ids=lambda k: k.value)
def test_random_networks_pass_uniqueness(random_cases, kind):
    for _, linear in random_cases:
        demand = _reshaped(linear, kind)
        assert validate_uniqueness(demand).passed
        assert validate_uniqueness(demand, nu=NU).passed


@pytest.mark.parametrize("kind", SHAPES, ids=lambda k: k.value)
@pytest.mark.parametrize("mode", [UNCOLL, COLL], ids=lambda m: m.value)
def test_epsilon_nash(random_cases, mode, kind):
    nu = NU if mode == COLL else None
    for network, linear in random_cases:
        demand = _reshaped(linear, kind)
        result = solve(network, demand, mode, nu=nu)
        assert _max_gain(result, network, demand, nu) <= 1e-7


@pytest.mark.parametrize("kind", SHAPES, ids=lambda k: k.value)
def test_price_and_loss_ordering_across_regimes(random_cases, kind):
    for network, linear in random_cases:
        demand = _reshaped(linear, kind)
        coll = solve(network, demand, COLL, nu=NU)
        uncoll = solve(network, demand, UNCOLL)
        fire = clear(network, demand)
        assert coll.price >= uncoll.price - 1e-9
        assert uncoll.price >= fire.price - 1e-9

        def loss(outcome):
            return float(outcome.liquidations.sum()) * (1 - outcome.price)

        assert loss(coll) <= loss(uncoll) + 1e-9
        assert loss(uncoll) <= loss(fire) + 1e-9


def test_outer_loop_contracts(random_cases, tight_config):
    for network, demand in random_cases:
        result = solve(network, demand, UNCOLL, config=tight_config)
        factor = result.contraction_factor()
        assert factor is None or factor < 1


def test_borrowing_covers_shortfall(random_cases):
    for network, demand in random_cases:
        result = solve(network, demand, UNCOLL)
        system = classify(network, UNCOLL)
        covered = result.liquidations * result.price + result.borrowing
        participants = system.participants
        np.testing.assert_allclose(covered[participants], system.shortfalls[participants], atol=1e-9)
        assert np.all(result.borrowing >= 0)
