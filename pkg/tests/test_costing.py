from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import support as S
from decnet.costing import COST_FIELDS, cost_breakdown, emission
from decnet.formulation import build_formulation
from decnet.instance import TECHS, generate_instance, paper_one_arc
from decnet.physics import PlanDecisions, solve_flows
from decnet.plan import embed_plan
from decnet.solver import minimal_pipes


def zero_plan(f, **named):
    plan = {n: 0.0 for n in f.catalog.names}
    plan.update(named)
    return plan


def test_energy_cost_from_table_injections():
    inst = paper_one_arc(costs={"alpha_p_e": 0.30, "alpha_p_g": 0.08})
    f = build_formulation(inst)
    cb = cost_breakdown(inst, zero_plan(f, s0_Esum=14771.0, s0_Gsum=73478.0))
    assert cb.C_energy == pytest.approx(10309.54, rel=1e-12)
    assert cb.C_energy == pytest.approx(4431.3 + 5878.24, rel=1e-12)


def test_zero_demand_plan_costs_nothing():
    inst = S.single_arc(S.demand(sel=0.0, shl=0.0, mel=0.0, mhl=0.0, hp_extra=0.0))
    f = build_formulation(inst)
    d = PlanDecisions((None,), (0.0,), (0.0,), (False,))
    cb = cost_breakdown(inst, embed_plan(f, d, solve_flows(inst, d)))
    assert all(getattr(cb, n) in (0.0, None) for n in COST_FIELDS)
    assert cb.total == 0.0 and cb.E_carbon == 0.0


def test_first_stage_renovation_cost():
    inst = paper_one_arc(costs={"nu1": 0.05})
    f = build_formulation(inst)
    cb = cost_breakdown(inst, zero_plan(f, **{"x1_CB[0,1]": 1.0}))
    assert cb.C_renov == pytest.approx(3305.8, rel=1e-12)


def test_emission_of_table_injections():
    inst = paper_one_arc(costs={"kappa_e": 0.4, "kappa_g": 0.2})
    e, ok = emission(inst, {"s0_Esum": 14771.0, "s0_Gsum": 73478.0})
    assert e == pytest.approx(20604.0, rel=1e-12)
    assert ok


def test_zero_injection_meets_any_target():
    inst = paper_one_arc(costs={"E_target": 0.0})
    assert emission(inst, {"s0_Esum": 0.0, "s0_Gsum": 0.0}) == (0.0, True)


def test_target_boundary_is_inclusive():
    inst = paper_one_arc(costs={"kappa_e": 0.5, "kappa_g": 0.25, "E_target": 20604.0})
    e, ok = emission(inst, {"s0_Esum": 14771.0, "s0_Gsum": 52874.0})
    assert e == 20604.0 and ok
    e, ok = emission(inst, {"s0_Esum": 14771.0, "s0_Gsum": 52874.5})
    assert not ok


def exact_plan(inst, d):
    f = build_formulation(inst)
    return f, embed_plan(f, d, solve_flows(inst, d))


def test_heat_pumps_pay_no_gas_grid():
    inst = generate_instance(6, seed=3)
    f, plan = exact_plan(inst, S.uniform(inst, "HP"))
    cb = cost_breakdown(inst, plan)
    assert cb.C_grid == 0.0
    f, plan = exact_plan(inst, S.uniform(inst, "HP", pipes_everywhere=True))
    assert cost_breakdown(inst, plan).C_grid == pytest.approx(sum(a.zeta_g for a in inst.arcs))


def test_breakdown_serialises_with_total():
    inst = paper_one_arc()
    f, plan = exact_plan(inst, S.uniform(inst, "CHP"))
    cb = cost_breakdown(inst, plan)
    doc = cb.to_dict()
    assert doc["total"] == pytest.approx(sum(doc[n] or 0.0 for n in COST_FIELDS))
    assert "total" in cb.table() and "E_carbon" in cb.table()


def decisions_for(inst, rng):
    techs = [str(rng.choice(TECHS)) if a.demand.has_heat else None for a in inst.arcs]
    x1 = [float(rng.uniform(0, 1)) if t else 0.0 for t in techs]
    x2 = [float(rng.uniform(0, 1)) if a == 1.0 else 0.0 for a in x1]
    return minimal_pipes(inst, PlanDecisions(tuple(techs), tuple(x1), tuple(x2), (False,) * inst.n_arcs))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6), st.booleans(), st.booleans())
def test_costing_agrees_with_objective(n, seed, cable, pipe):
    inst = generate_instance(n, "tree", seed=seed, cable_sizing=cable, pipe_sizing=pipe)
    rng = np.random.default_rng(seed)
    d = decisions_for(inst, rng)
    if cable:
        d = replace(d, cable=tuple(int(rng.integers(0, len(inst.cable_catalog))) for _ in inst.arcs))
    if pipe:
        d = replace(d, pipe=tuple(int(rng.integers(0, 3)) if y else None for y in d.y_g))
    f, plan = exact_plan(inst, d)
    total = cost_breakdown(inst, plan).total
    assert f.evaluate_objective(plan.values) == pytest.approx(total, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10**6), st.floats(0.1, 10.0))
def test_prices_scale_every_cost(n, seed, factor):
    inst = generate_instance(n, "tree", seed=seed)
    d = decisions_for(inst, np.random.default_rng(seed))
    f, plan = exact_plan(inst, d)
    base = cost_breakdown(inst, plan)
    scaled_inst = replace(inst, costs=inst.costs.scaled(factor),
                          arcs=tuple(replace(a, zeta_g=a.zeta_g * factor) for a in inst.arcs))
    scaled = cost_breakdown(scaled_inst, plan)
    for name in COST_FIELDS:
        if getattr(base, name) is not None:
            assert getattr(scaled, name) == pytest.approx(factor * getattr(base, name), rel=1e-12, abs=1e-9)
    assert scaled.E_carbon == base.E_carbon
