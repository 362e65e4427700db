import math

import numpy as np
import pytest

import support as S
from decnet.costing import cost_breakdown
from decnet.formulation import build_formulation, evaluate_residuals
from decnet.instance import generate_instance, paper_one_arc
from decnet.physics import check_feasibility
from decnet.plan import embed_plan
from decnet.solver import (
    BnbNode,
    BranchAndBound,
    SolverConfig,
    SolverError,
    branch,
    emission_floor,
    enumerate_exact,
    incumbent_from_point,
    relative_gap,
    renovation_profiles,
    solve,
)

CB_CHEAP = {"gamma": {"CB": 100.0, "CHP": 5000.0, "HP": 5000.0}}


def test_cheap_boilers_are_chosen():
    inst = paper_one_arc(costs=CB_CHEAP)
    res = solve(inst)
    assert res.status == "optimal"
    assert res.technologies == ("CB",)
    assert res.objective == pytest.approx(cost_breakdown(inst, res.incumbent).total, rel=1e-12)
    oracle = enumerate_exact(inst, (0.0, 1.0))
    assert oracle.technologies == ("CB",)
    assert res.objective <= oracle.objective * (1 + 1e-6)


def test_zero_emission_target_is_emission_infeasible():
    res = solve(paper_one_arc(costs={"E_target": 0.0}))
    assert res.status == "emission-infeasible"
    assert res.incumbent is None and "E_target" in res.message


def test_small_tree_matches_oracle():
    inst = generate_instance(4, "tree", seed=11)
    assert inst.is_tree and inst.n_arcs == 3
    res = solve(inst, renovation_grid=(0.0, 1.0))
    oracle = enumerate_exact(inst, (0.0, 1.0))
    assert res.status == "optimal"
    assert abs(res.objective - oracle.objective) <= 1e-6 * abs(oracle.objective)
    if oracle.extra["unique"]:
        assert res.technologies == oracle.technologies


def test_result_invariants_hold():
    inst = generate_instance(4, "tree", seed=2)
    res = solve(inst, renovation_grid=(0.0, 1.0))
    assert res.status == "optimal" and res.gap <= 1e-6
    f = build_formulation(inst)
    assert evaluate_residuals(f, res.incumbent, 1e-6).ok
    assert check_feasibility(inst, res.decisions).feasible
    assert res.lower_bound <= res.objective + 1e-9
    assert res.root_bound <= res.lower_bound + 1e-9 * abs(res.lower_bound)
    doc = res.to_dict(inst)
    assert doc["status"] == "optimal" and doc["decisions"]["arcs"]


def test_continuous_renovation_is_at_least_as_good_as_grid():
    inst = generate_instance(3, "tree", seed=6)
    cont = solve(inst)
    grid = enumerate_exact(inst, (0.0, 1.0))
    assert cont.status == "optimal"
    assert cont.objective <= grid.objective * (1 + 1e-6)


def test_solve_is_deterministic():
    inst = generate_instance(4, "tree", seed=5)
    a = solve(inst, renovation_grid=(0.0, 1.0))
    b = solve(inst, renovation_grid=(0.0, 1.0))
    assert a.nodes == b.nodes and a.objective == b.objective
    assert a.decisions == b.decisions


def test_threads_reach_same_optimum():
    inst = generate_instance(4, "tree", seed=5)
    a = solve(inst, renovation_grid=(0.0, 1.0))
    b = solve(inst, renovation_grid=(0.0, 1.0), threads=2)
    assert b.status == "optimal"
    assert b.objective == pytest.approx(a.objective, rel=1e-6)


def test_node_limit_is_reported():
    inst = generate_instance(5, "tree", seed=3)
    res = solve(inst, node_limit=2)
    assert res.status == "node-limit" and res.nodes <= 2
    assert "node limit" in res.message


class RecordingBnb(BranchAndBound):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.seen = []

    def evaluate(self, node):
        ev = super().evaluate(node)
        self.seen.append((node.lb.copy(), node.ub.copy(), ev.bound))
        return ev


@pytest.mark.parametrize("seed", [1, 4])
def test_bounds_never_exceed_optimum_inside_box(seed):
    inst = generate_instance(4, "tree", seed=seed)
    oracle = enumerate_exact(inst, (0.0, 1.0))
    x = oracle.incumbent.values
    bnb = RecordingBnb(inst, SolverConfig(renovation_grid=(0.0, 1.0), node_limit=400))
    bnb.run()
    hits = 0
    for lb, ub, bound in bnb.seen:
        if np.all(x >= lb - 1e-9) and np.all(x <= ub + 1e-9):
            hits += 1
            assert bound <= oracle.objective + 1e-9 * abs(oracle.objective)
    assert hits >= 1


# --------------------------------------------------------------------------- branching


def resolved_point(bnb, inst, tech="CB"):
    f = bnb.f
    d = S.uniform(inst, tech)
    plan = embed_plan(f, d, check_feasibility(inst, d).state)
    x = plan.values
    a, b = bnb.builder.products[:, 0], bnb.builder.products[:, 1]
    return np.concatenate([x, x[a] * x[b]])


def test_fractional_technology_branches_to_zero_and_one():
    inst = paper_one_arc()
    bnb = BranchAndBound(inst)
    node = BnbNode(bnb.root_lb.copy(), bnb.root_ub.copy(), -math.inf)
    z = resolved_point(bnb, inst)
    j = bnb.f.catalog["x_CB[0,1]"]
    z[j] = 0.5
    lo, hi = branch(bnb, node, z)
    assert lo.ub[j] == 0.0 and hi.lb[j] == 1.0
    assert lo.lb[j] == 0.0 and hi.ub[j] == 1.0


def test_spatial_branch_splits_potential_at_lp_value():
    inst = paper_one_arc()
    bnb = BranchAndBound(inst)
    cat = bnb.f.catalog
    u, ub_ = cat["u[1]"], cat["u_bar[0,1]"]
    node = BnbNode(bnb.root_lb.copy(), bnb.root_ub.copy(), -math.inf)
    node.lb[ub_], node.ub[ub_] = 0.0, 40.0
    z = resolved_point(bnb, inst)
    z[u], z[ub_] = 380.0, 20.0
    z[bnb.f.n_vars:] = z[bnb.builder.products[:, 0]] * z[bnb.builder.products[:, 1]]
    k = next(i for i, (a, b) in enumerate(bnb.builder.products) if {a, b} == {u, ub_})
    z[bnb.f.n_vars + k] += 0.8
    assert bnb.builder.violations(z)[k] == pytest.approx(0.8)
    lo, hi = branch(bnb, node, z)
    assert lo.ub[u] == 380.0 and hi.lb[u] == 380.0
    assert lo.lb[u] == 360.0 and hi.ub[u] == 400.0


def test_resolved_point_is_not_branched():
    inst = paper_one_arc()
    bnb = BranchAndBound(inst)
    node = BnbNode(bnb.root_lb.copy(), bnb.root_ub.copy(), -math.inf)
    with pytest.raises(SolverError, match="nothing to branch"):
        branch(bnb, node, resolved_point(bnb, inst))


# --------------------------------------------------------------------------- incumbents


def test_rounding_accepts_physics_point():
    inst = S.electric_case()
    f = build_formulation(inst)
    x = np.zeros(f.n_vars)
    x[f.catalog["x_CB[0,1]"]] = 0.9
    x[f.catalog["x_HP[0,1]"]] = 0.1
    plan = incumbent_from_point(inst, x, f)
    assert plan is not None
    assert plan["x_CB[0,1]"] == 1.0 and plan["y_g[0,1]"] == 1.0
    assert plan["u[1]"] == pytest.approx(390.0, abs=1e-6)


def test_rounding_rejects_physically_infeasible_plan():
    inst = S.electric_case(u_min=395.0)
    f = build_formulation(inst)
    x = np.zeros(f.n_vars)
    x[f.catalog["x_CB[0,1]"]] = 0.9
    assert incumbent_from_point(inst, x, f) is None


def test_exact_point_is_returned_unchanged():
    inst = paper_one_arc()
    f = build_formulation(inst)
    d = S.uniform(inst, "CHP", x1=1.0, x2=1.0)
    plan = embed_plan(f, d, check_feasibility(inst, d).state)
    again = incumbent_from_point(inst, plan.values, f)
    assert np.allclose(again.values, plan.values, rtol=0, atol=1e-9)


# --------------------------------------------------------------------------- oracle


def test_one_arc_oracle_counts_nine_candidates():
    assert renovation_profiles((0, 1)) == [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]
    res = enumerate_exact(paper_one_arc(), (0.0, 1.0))
    assert res.extra["candidates"] == 9
    assert res.status == "optimal"


def test_finer_grid_profiles_respect_completion_rule():
    assert renovation_profiles((0, 0.5, 1)) == [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (1.0, 1.0)]


def test_strict_target_leaves_only_heat_pumps():
    inst = paper_one_arc(costs={"kappa_e": 0.1, "kappa_g": 10.0, "E_target": 5000.0})
    # hand check: CB/CHP burn at least 0.55 * 73478 kWh of gas, i.e. >= 404129 kg; HP emits 0.1 * 36836
    assert 0.1 * 36836 <= 5000.0 < 10.0 * 0.55 * 73478
    oracle = enumerate_exact(inst, (0.0, 1.0))
    assert oracle.technologies == ("HP",)
    res = solve(inst, renovation_grid=(0.0, 1.0))
    assert res.technologies == ("HP",)
    assert res.objective == pytest.approx(oracle.objective, rel=1e-6)


def test_no_heat_and_no_demand_costs_nothing():
    inst = S.single_arc(S.demand(sel=0.0, shl=0.0, mel=0.0, mhl=0.0, hp_extra=0.0), zeta_g=10.0)
    res = enumerate_exact(inst)
    assert res.objective == 0.0 and res.technologies == (None,)
    assert solve(inst).objective == pytest.approx(0.0, abs=1e-9)


def test_oracle_guards():
    with pytest.raises(SolverError, match="tree"):
        enumerate_exact(generate_instance(6, "ring", seed=1))
    with pytest.raises(SolverError, match="guard"):
        enumerate_exact(generate_instance(12, "tree", seed=1), (0.0, 0.5, 1.0))


def test_emission_floor_separates_feasible_targets():
    inst = generate_instance(3, "tree", seed=8)
    floor = emission_floor(inst)
    below = inst.with_costs(E_target=0.99 * floor)
    assert enumerate_exact(below).status == "emission-infeasible"
    assert solve(below, renovation_grid=(0.0, 1.0)).status == "emission-infeasible"
    above = inst.with_costs(E_target=1.2 * floor)
    assert enumerate_exact(above).status == "optimal"


def test_relative_gap_edge_cases():
    assert relative_gap(10.0, 10.0) == 0.0
    assert relative_gap(10.0, 9.0) == pytest.approx(0.1)
    assert relative_gap(math.inf, 1.0) == math.inf
    assert relative_gap(10.0, 11.0) == 0.0


# --------------------------------------------------------------------------- sized networks


@pytest.mark.parametrize("seed", [0, 2, 5])
def test_sized_networks_match_oracle(seed):
    inst = generate_instance(3, "tree", seed=seed, cable_sizing=True, pipe_sizing=True)
    res = solve(inst, renovation_grid=(0.0, 1.0), node_limit=2000)
    oracle = enumerate_exact(inst, (0.0, 1.0))
    assert res.status == "optimal"
    assert abs(res.objective - oracle.objective) <= 1e-6 * abs(oracle.objective)


def test_tiny_binary_fraction_is_branched():
    # big-M rows turn a 1e-7 selector fraction into visible slack, so it must not count as integral
    inst = paper_one_arc()
    bnb = BranchAndBound(inst)
    node = BnbNode(bnb.root_lb.copy(), bnb.root_ub.copy(), -math.inf)
    z = resolved_point(bnb, inst)
    j = bnb.f.catalog["x_HP[0,1]"]
    z[j] = 1e-7
    lo, hi = branch(bnb, node, z)
    assert lo.ub[j] == 0.0 and hi.lb[j] == 1.0


def test_bisection_halves_widest_factor():
    inst = paper_one_arc()
    bnb = BranchAndBound(inst)
    node = BnbNode(bnb.root_lb.copy(), bnb.root_ub.copy(), -math.inf)
    lo, hi = bnb.bisect(node)
    j = lo.history[-2][1]
    mid = 0.5 * (node.lb[j] + node.ub[j])
    assert lo.ub[j] == mid and hi.lb[j] == mid
    shrunk = BnbNode(node.lb.copy(), node.ub.copy(), -math.inf)
    f = np.unique(bnb.builder.products)
    shrunk.ub[f] = shrunk.lb[f]
    assert bnb.bisect(shrunk) is None
