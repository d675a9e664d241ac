import itertools

import numpy as np
import pytest
from scipy.sparse import csr_array

from conftest import random_graph
from netmarket.alpha import (TransportPlan, TransportProblem, build_transport, extract_power_diagram,
                             probe_transport, solve_transport)
from netmarket.equilibrium import Buyer, Seller
from netmarket.errors import Infeasible, NegativeAlpha, Unbalanced
from netmarket.mcf import FlowProblem, solve_mcf


def enumerate_unit_plans(cost):
    """All one-to-one plans of a square unit transport problem with their costs."""
    n = cost.shape[0]
    return {perm: sum(cost[i, perm[i]] for i in range(n)) for perm in itertools.permutations(range(n))}


def test_alpha4_costs(alpha4, alpha4_agents):
    np.testing.assert_array_equal(build_transport(alpha4, *alpha4_agents, 1.0).cost, [[1, 3], [2, 4]])
    np.testing.assert_array_equal(build_transport(alpha4, *alpha4_agents, 2.0).cost, [[1, 9], [4, 16]])


def test_colocated_pair_costs_zero(line3):
    tp = build_transport(line3, [Buyer(1, 1.0)], [Seller(1, "w", observed_supply=1.0)], 1.0)
    assert tp.cost[0, 0] == 0


def test_alpha4_alpha1_is_degenerate(alpha4, alpha4_agents):
    tp = build_transport(alpha4, *alpha4_agents, 1.0)
    plans = enumerate_unit_plans(tp.cost)
    assert sorted(plans.values()) == [5, 5]
    plan = solve_transport(tp)
    assert plan.total_cost == 5
    degenerate, found = probe_transport(tp)
    assert degenerate
    assert len({p.support() for p in found}) == 2
    assert all(p.total_cost == 5 for p in found)


def test_alpha4_alpha2_is_unique(alpha4, alpha4_agents):
    tp = build_transport(alpha4, *alpha4_agents, 2.0)
    plans = enumerate_unit_plans(tp.cost)
    assert plans == {(0, 1): 17, (1, 0): 13}
    plan = solve_transport(tp)
    assert plan.total_cost == 13
    assert plan.support() == {(0, 1), (1, 0)}  # buyer 1 -> seller 4, buyer 2 -> seller 3
    degenerate, found = probe_transport(tp)
    assert not degenerate and len(found) == 1


def test_single_pair_any_alpha(line3):
    for alpha in (1.0, 1.5, 3.0):
        tp = build_transport(line3, [Buyer(2, 2.5)], [Seller(0, "w", observed_supply=2.5)], alpha)
        plan = solve_transport(tp)
        assert plan.weights.toarray().tolist() == [[2.5]]
        assert plan.total_cost == pytest.approx(2.5 * 2 ** alpha)


def test_alpha_below_one(alpha4, alpha4_agents):
    with pytest.raises(NegativeAlpha):
        build_transport(alpha4, *alpha4_agents, 0.5)


def test_unbalanced(alpha4):
    with pytest.raises(Unbalanced):
        build_transport(alpha4, [Buyer(0, 1.0)], [Seller(2, "3", observed_supply=2.0)], 1.0)


def test_infeasible_infinite_cost():
    tp = TransportProblem(np.array([[np.inf, 1.0], [np.inf, 1.0]]), [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(Infeasible):
        solve_transport(tp)


@pytest.mark.parametrize("seed", range(30))
def test_alpha1_matches_network_cost(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    g = random_graph(rng, n, p=0.3, connected=True)
    units = int(rng.integers(1, 6))
    sellers = [Seller(int(v), f"s{i}", observed_supply=1.0) for i, v in enumerate(rng.integers(0, n, units))]
    buyers = [Buyer(int(v), 1.0) for v in rng.integers(0, n, units)]
    plan = solve_transport(build_transport(g, buyers, sellers, 1.0))
    z = np.zeros(n)
    for s in sellers:
        z[s.node] += 1
    for b in buyers:
        z[b.node] -= 1
    assert plan.total_cost == solve_mcf(FlowProblem(g, z)).total_cost


@pytest.mark.parametrize("seed", range(30))
def test_plan_feasible_with_dual_certificate(seed):
    rng = np.random.default_rng(seed)
    nb, ns = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    cost = rng.uniform(0, 10, (nb, ns)) ** float(rng.uniform(1, 3))
    supply = rng.uniform(0.1, 2, ns)
    demand = rng.dirichlet(np.ones(nb)) * supply.sum()
    tp = TransportProblem(cost, supply, demand * (supply.sum() / demand.sum()))
    plan = solve_transport(tp)
    w = plan.weights.toarray()
    np.testing.assert_allclose(w.sum(axis=1), tp.demand, atol=1e-9)
    np.testing.assert_allclose(w.sum(axis=0), tp.supply, atol=1e-9)
    assert np.all(w >= 0)
    reduced = cost - (plan.buyer_dual[:, None] - plan.seller_dual[None, :])
    assert reduced.min() >= -1e-9
    assert np.abs(reduced[w > 0]).max() <= 1e-9
    assert plan.total_cost == pytest.approx(float((w * cost).sum()), rel=1e-12)


def test_sparse_fallback_exact_when_k_covers(alpha4, alpha4_agents):
    tp = build_transport(alpha4, *alpha4_agents, 2.0, dense_cap=1, k=2)
    assert tp.is_sparse
    assert solve_transport(tp).total_cost == 13


def test_sparse_fallback_keeps_nearest(alpha4, alpha4_agents):
    tp = build_transport(alpha4, *alpha4_agents, 1.0, dense_cap=1, k=1)
    assert tp.cost.toarray().tolist() == [[1, 0], [2, 0]]  # only seller 3 kept for both buyers
    with pytest.raises(Infeasible):
        solve_transport(tp)


def test_power_diagram_integral(alpha4, alpha4_agents):
    plan = solve_transport(build_transport(alpha4, *alpha4_agents, 2.0))
    diagram = extract_power_diagram(plan)
    assert diagram.assignment == (1, 0) and diagram.split_count == 0


def test_power_diagram_split():
    w = csr_array(np.array([[0.5, 0.5], [0.0, 1.0]]))
    plan = TransportPlan(w, 0.0, np.zeros(2), np.zeros(2))
    diagram = extract_power_diagram(plan, tie_tol=1e-6)
    assert diagram.assignment == ((0, 1), 1)
    assert diagram.split_count == 1


def test_power_diagram_tolerance():
    w = csr_array(np.array([[1 - 1e-8, 1e-8]]))
    plan = TransportPlan(w, 0.0, np.zeros(2), np.zeros(1))
    assert extract_power_diagram(plan, tie_tol=1e-6).split_count == 0
    assert extract_power_diagram(plan, tie_tol=1e-9).split_count == 1


def test_degen4_style_two_diagrams(degen4, degen4_agents):
    # Every buyer is indifferent: both integral assignments are optimal.
    buyers, sellers = degen4_agents
    tp = build_transport(degen4, buyers, sellers, 1.0)
    degenerate, plans = probe_transport(tp)
    assert degenerate
    diagrams = {extract_power_diagram(p).assignment for p in plans}
    assert diagrams == {(0, 1), (1, 0)}


def test_alpha_penalises_longer_route():
    d1, d2 = 2.0, 3.0
    ratios = [(d2 / d1) ** a for a in (1.0, 1.5, 2.0, 3.0, 5.0)]
    assert all(x < y for x, y in zip(ratios, ratios[1:]))
