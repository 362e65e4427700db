from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import support as S
from decnet.formulation import (
    BILINEAR_EQ,
    QUADRATIC_INEQ,
    build_formulation,
    emit_cable_option,
    emit_demand_coupling,
    emit_electric_flow,
    emit_gas_flow,
    emit_objective_and_emission,
    emit_pipe_option,
    emit_renovation_constraints,
    emit_technology_constraints,
    evaluate_residuals,
    export_json,
    export_text,
    rows_by_tag,
    tag_coverage,
)
from decnet.instance import (
    TECHS,
    CableType,
    InstanceError,
    Options,
    PipeCatalog,
    generate_instance,
    paper_one_arc,
)
from decnet.physics import solve_flows
from decnet.plan import embed_plan


def by_id(rows, prefix):
    return [r for r in rows if r.id.startswith(prefix)]


# --------------------------------------------------------------------------- technology and renovation


def test_one_technology_row_on_heat_arc():
    rows = emit_technology_constraints(paper_one_arc())
    assert len(rows) == 1
    assert rows[0].sense == "==" and rows[0].rhs == 1.0 and len(rows[0].lin) == 3


def without_heat(inst, ks):
    arcs = list(inst.arcs)
    for k in ks:
        arcs[k] = replace(arcs[k], demand=replace(arcs[k].demand, SHL=0.0, MHL=0.0))
    return replace(inst, arcs=tuple(arcs))


def test_no_technology_on_arc_without_heat():
    inst = without_heat(paper_one_arc(), [0])
    f = build_formulation(inst)
    assert emit_technology_constraints(inst) == []
    for t in TECHS:
        j = f.catalog[f"x_{t}[0,1]"]
        assert f.catalog.lb[j] == f.catalog.ub[j] == 0.0
        assert f"x1_{t}[0,1]" not in f.catalog


def test_technology_rows_count_heat_arcs():
    inst = without_heat(generate_instance(6, "tree", seed=3), [1, 3])
    assert len(emit_technology_constraints(inst)) == 3


def test_four_renovation_rows_per_technology():
    assert len(emit_renovation_constraints(paper_one_arc())) == 12


def test_renovation_rows_on_examples():
    inst = paper_one_arc()
    f = build_formulation(inst)
    rows = [r for r in f.rows if r.id.endswith(",HP]") and r.paper_tag in ("eq:installreno", "eq:firstsecren")]
    assert len(rows) == 4
    x = S.values_of(f, {"x_HP[0,1]": 1, "x1_HP[0,1]": 0.5, "x2_HP[0,1]": 0.2, "z_HP[0,1]": 0})
    failing = [r.id for r in rows if not S.row_holds(r, x)]
    assert failing == ["firstsecren_start[0,1,HP]"]
    x = S.values_of(f, {"x_HP[0,1]": 1, "x1_HP[0,1]": 1, "x2_HP[0,1]": 0.7, "z_HP[0,1]": 1})
    assert all(S.row_holds(r, x) for r in rows)


# --------------------------------------------------------------------------- demand coupling


def coupled(f, assignment, var, row_id):
    x = S.values_of(f, assignment)
    return S.solve_row_for(f.row(row_id), x, f.catalog[var])


def test_gas_demand_without_renovation():
    f = build_formulation(paper_one_arc())
    assert coupled(f, {"x_CB[0,1]": 1}, "s_Gsum[0,1]", "gasrenored_sum[0,1]") == 73478
    assert coupled(f, {"x_CB[0,1]": 1}, "s_Gmax[0,1]", "gasrenored_max[0,1]") == pytest.approx(52.9, rel=1e-15)


def test_gas_demand_with_first_stage():
    f = build_formulation(paper_one_arc())
    v = coupled(f, {"x_CB[0,1]": 1, "x1_CB[0,1]": 1}, "s_Gsum[0,1]", "gasrenored_sum[0,1]")
    assert v == pytest.approx(73478 * 0.7, rel=1e-12)
    assert v == pytest.approx(51434.6, rel=1e-12)


def test_heat_pump_electricity_with_first_stage():
    f = build_formulation(paper_one_arc())
    v = coupled(f, {"x_HP[0,1]": 1, "x1_HP[0,1]": 1}, "s_Esum_HP[0,1]", "ereno_sum[0,1,HP]")
    assert v == pytest.approx(30216.5, rel=1e-12)


def test_node_peaks_are_half_sums():
    f = build_formulation(paper_one_arc())
    row = f.row("artmove_G[1]")
    assert dict(row.lin)[f.catalog["s_Gmax[0,1]"]] == -0.5
    assert len(emit_demand_coupling(paper_one_arc())) == 2 + 2 * 3 + 2 + 2 * 2 + 2


# --------------------------------------------------------------------------- electric


def test_electric_row_counts_on_one_arc():
    rows = emit_electric_flow(paper_one_arc())
    assert len([r for r in rows if r.kind == BILINEAR_EQ]) == 2
    assert len(by_id(rows, "voltdrop")) == 1
    assert len(by_id(rows, "elecbalan")) == 2
    assert len(by_id(rows, "injectmax")) == 1
    assert len(by_id(rows, "sourcevolt")) == 1


def test_ohmic_rows_closed_form():
    f = build_formulation(S.electric_case())
    x = S.values_of(f, {"u[0]": 400.0, "u[1]": 390.0, "u_bar[0,1]": 10.0})
    assert S.solve_row_for(f.row("ohmic_in[0,1]"), x, f.catalog["f_e_in[0,1]"]) == pytest.approx(3900.0)
    assert S.solve_row_for(f.row("ohmic_out[0,1]"), x, f.catalog["f_e_out[0,1]"]) == pytest.approx(4000.0)


def test_zero_drop_forces_zero_flow():
    f = build_formulation(S.electric_case())
    x = S.values_of(f, {"u[0]": 400.0, "u[1]": 400.0})
    for rid, var in (("ohmic_in[0,1]", "f_e_in[0,1]"), ("ohmic_out[0,1]", "f_e_out[0,1]")):
        assert S.solve_row_for(f.row(rid), x, f.catalog[var]) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(300, 400), st.floats(300, 400), st.floats(1e-3, 10), st.floats(1e-3, 10))
def test_ohmic_rows_imply_nonnegative_loss(ui, uj, R, a):
    inst = S.single_arc(S.demand(), physical={"a_e": a, "u_min": 250.0}, R_e=R)
    f = build_formulation(inst)
    x = S.values_of(f, {"u[0]": ui, "u[1]": uj, "u_bar[0,1]": ui - uj})
    fin = S.solve_row_for(f.row("ohmic_in[0,1]"), x, f.catalog["f_e_in[0,1]"])
    fout = S.solve_row_for(f.row("ohmic_out[0,1]"), x, f.catalog["f_e_out[0,1]"])
    loss = a * (ui - uj) ** 2 / R
    assert fout - fin == pytest.approx(loss, rel=1e-9, abs=1e-9)
    assert fout - fin >= -1e-9


# --------------------------------------------------------------------------- gas


def gas_formulation(**phys):
    base = {"a_g": 1.0, "p_max": 60.0, "p_min": 10.0, "q_max": 100.0}
    base.update(phys)
    return build_formulation(S.single_arc(S.demand(), physical=base, R_g=0.1))


def implied_interval(rows, x, j):
    """Interval for variable ``j`` implied by linear inequality rows, other values fixed."""
    lo, hi = -np.inf, np.inf
    for r in rows:
        c = dict(r.lin)[j]
        rest = S.row_activity(r, x) - c * x[j]
        v = (r.rhs - rest) / c
        if (r.sense == ">=") == (c > 0):
            lo = max(lo, v)
        else:
            hi = min(hi, v)
    return lo, hi


def test_pbarref_pins_positive_part():
    f = gas_formulation()
    x = S.values_of(f, {"y_plus[0,1]": 1, "y_minus[0,1]": 0, "p_bar[0,1]": 30.0})
    lo, hi = implied_interval(by_id(f.rows, "pbarref"), x, f.catalog["p_bar_plus[0,1]"])
    assert lo == pytest.approx(30.0) and hi == pytest.approx(30.0)


def test_no_pipe_means_no_gas_flow():
    f = gas_formulation()
    cap = f.row("DWfinal_cap[0,1]")
    j = f.catalog["f_g[0,1]"]
    for flow, ok in ((0.0, True), (1.0, False), (-1.0, False)):
        x = S.values_of(f, {"y_g[0,1]": 0})
        x[j] = flow
        assert S.row_holds(cap, x) is ok


def test_darcy_rows_pin_flow_magnitude():
    f = gas_formulation(p_max=60.0, p_min=0.0)
    rows = by_id(f.rows, "DWfinal")
    assert all(r.kind == QUADRATIC_INEQ for r in rows)
    j = f.catalog["f_g[0,1]"]
    for flow, ok in ((20.0, True), (-20.0, True), (19.9, False), (20.1, False)):
        x = S.values_of(f, {"y_g[0,1]": 1, "p_bar_plus[0,1]": 40.0})
        x[j] = flow
        assert all(S.row_holds(r, x, 1e-9) for r in rows) is ok


def test_pipe_rows_link_gas_technologies():
    rows = emit_gas_flow(paper_one_arc())
    assert {r.id for r in by_id(rows, "pipebuild")} == {"pipebuild_CB[0,1]", "pipebuild_CHP[0,1]"}
    assert len(by_id(rows, "refgflow_")) == 5
    assert len(by_id(rows, "pbarref")) == 4
    assert len(by_id(rows, "DWfinal")) == 3
    assert len(by_id(rows, "builgaspiperel")) == 2


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([(1, 0), (0, 1)]), st.floats(-50, 50), st.floats(-100, 100))
def test_direction_rows_make_signs_agree(y, pbar, q):
    f = gas_formulation()
    x = S.values_of(f, {"y_plus[0,1]": y[0], "y_minus[0,1]": y[1], "p_bar[0,1]": pbar, "q_bar[0,1]": q})
    exact = [Fraction(v) for v in x]
    rows = [r for r in by_id(f.rows, "refgflow_") if r.id.split("[")[0] != "refgflow_dir"]
    if all(S.row_holds(r, exact, 0) for r in rows):
        assert q * pbar >= 0.0


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([(1, 0), (0, 1)]), st.floats(-50, 50))
def test_pbarref_exact_at_binary_direction(y, pbar):
    f = gas_formulation()
    x = S.values_of(f, {"y_plus[0,1]": y[0], "y_minus[0,1]": y[1], "p_bar[0,1]": pbar})
    lo, hi = implied_interval(by_id(f.rows, "pbarref"), x, f.catalog["p_bar_plus[0,1]"])
    target = (y[0] - y[1]) * pbar
    assert abs(lo - target) <= 1e-12 * max(1.0, abs(target))
    assert abs(hi - target) <= 1e-12 * max(1.0, abs(target))


# --------------------------------------------------------------------------- options


def cable_instance(types):
    inst = paper_one_arc()
    arc = replace(inst.arcs[0], R_e=None)
    return replace(inst, arcs=(arc,), cable_catalog=tuple(types), options=Options(cable_sizing=True))


def test_cable_option_blocks():
    inst = cable_instance([CableType(3e-4, 20.0), CableType(2e-4, 28.0), CableType(1e-4, 40.0)])
    rows = emit_cable_option(inst)
    assert len(by_id(rows, "cablesel")) == 1
    ohmic = [r for r in rows if r.paper_tag == "eq:ohmic" and ";" in r.id]
    blocks = {(r.id.split("_")[1], r.id.split(";")[1]) for r in ohmic}
    assert len(blocks) == 6
    assert all(r.products for r in ohmic)


def test_single_cable_type_reduces_to_base_model():
    inst = cable_instance([CableType(2e-4, 28.0)])
    base = paper_one_arc()
    base = replace(base, arcs=(replace(base.arcs[0], R_e=2e-4 * 100.0),))
    f1, f0 = build_formulation(inst), build_formulation(base)
    assert [r.id for r in f1.rows] == [r.id for r in f0.rows]
    assert f1.catalog.names == f0.catalog.names
    extra = [t for t in f1.terms if t.name == "C_grid_e"]
    assert len(extra) == 1 and extra[0].coefs == () and extra[0].constant == pytest.approx(28.0 * 100.0)


def test_missing_catalogs_are_errors():
    inst = paper_one_arc()
    arc = replace(inst.arcs[0], R_g=None, zeta_g=None)
    piped = replace(inst, arcs=(arc,), pipe_catalog=PipeCatalog(()), options=Options(pipe_sizing=True))
    with pytest.raises(InstanceError):
        build_formulation(piped)
    with pytest.raises(InstanceError):
        emit_pipe_option(paper_one_arc())
    with pytest.raises(InstanceError):
        emit_cable_option(paper_one_arc())


def test_pipe_option_selects_one_type_per_built_pipe():
    inst = generate_instance(3, seed=4, pipe_sizing=True)
    rows = emit_pipe_option(inst)
    sel = by_id(rows, "pipesel")
    assert len(sel) == inst.n_arcs
    for r in sel:
        assert sorted(c for _, c in r.lin) == [-1.0, 1.0, 1.0, 1.0]


# --------------------------------------------------------------------------- objective and emission


def test_zero_prices_give_zero_objective():
    zero = {k: 0.0 for k in ("alpha_p_e", "alpha_p_g", "beta_e", "beta_g", "alpha_a_e", "alpha_a_g", "nu1", "nu2")}
    zero["gamma"] = {t: 0.0 for t in TECHS}
    inst = S.single_arc(S.demand(), costs=zero, zeta_g=0.0)
    f = build_formulation(inst)
    assert not np.any(f.objective) and f.objective_constant == 0.0


def test_carbon_row_value():
    inst = S.single_arc(S.demand(), costs={"kappa_e": 0.4, "kappa_g": 0.2})
    terms, rows = emit_objective_and_emission(inst)
    f = build_formulation(inst)
    carbon = [r for r in rows if "eq:carbon" in r.paper_tags][0]
    x = S.values_of(f, {"s0_Esum": 1000.0, "s0_Gsum": 2000.0})
    assert S.row_activity(carbon, x) == pytest.approx(800.0, rel=1e-15)


def test_technology_cost_term():
    inst = generate_instance(4, seed=5)
    inst = inst.with_costs(gamma={"CB": 100.0, "CHP": 1.0, "HP": 1.0})
    f = build_formulation(inst)
    x = S.values_of(f, {f"x_CB[{a.i},{a.j}]": 1.0 for a in inst.arcs})
    tech = [t for t in f.terms if t.name == "C_tech"][0]
    assert sum(c * x[j] for j, c in tech.coefs) == pytest.approx(300.0)


# --------------------------------------------------------------------------- assembly


def expected_one_arc_names():
    arc = "[0,1]"
    names = [f"x_{t}{arc}" for t in TECHS]
    names += [f"{v}_{t}{arc}" for t in TECHS for v in ("x1", "x2", "z")]
    names += [f"{v}{arc}" for v in ("y_g", "y_plus", "y_minus", "s_Esum", "s_Emax", "s_Gsum", "s_Gmax")]
    names += [f"{v}_{t}{arc}" for t in TECHS for v in ("s_Esum", "s_Emax")]
    names += [f"{v}{arc}" for v in ("f_e_in", "f_e_out", "f_g", "q_bar", "p_bar", "p_bar_plus", "u_bar")]
    names += [f"{v}[{i}]" for i in (0, 1) for v in ("u", "p", "sbar_Emax", "sbar_Gmax")]
    names += ["s0_Esum", "s0_Gsum", "s0_Emax", "s0_Gmax", "s_chp_Esum"]
    return names


def test_one_arc_catalog_is_exact():
    f = build_formulation(paper_one_arc())
    assert sorted(f.catalog.names) == sorted(expected_one_arc_names())
    assert np.all(np.isfinite(f.catalog.lower())) and np.all(np.isfinite(f.catalog.upper()))


def test_rows_reference_catalog_and_ids_unique():
    f = build_formulation(generate_instance(7, "grid", seed=2))
    assert len({r.id for r in f.rows}) == f.n_rows
    for r in f.rows:
        idx = [j for j, _ in r.lin] + [j for _, a, b in r.products for j in (a, b)]
        assert all(0 <= j < f.n_vars for j in idx)
        if r.kind.startswith("linear"):
            assert not r.products


def test_export_is_deterministic():
    inst = generate_instance(5, seed=9)
    a, b = build_formulation(inst), build_formulation(inst)
    assert export_text(a) == export_text(b)
    assert export_json(a) == export_json(b)
    first = export_text(a).splitlines()
    assert first[0].startswith("# decnet formulation")
    assert any(line.startswith("ROW atmost1MECT[") for line in first)


def test_every_equation_label_is_emitted():
    f = build_formulation(generate_instance(6, "grid", seed=1))
    assert tag_coverage(f) == {"rows": [], "bounds": [], "objective": []}
    assert rows_by_tag(f.rows, "eq:ohmic")


# --------------------------------------------------------------------------- residuals


def test_physics_point_has_no_violations():
    inst = paper_one_arc()
    f = build_formulation(inst)
    d = S.uniform(inst, "CHP", x1=1.0, x2=0.4)
    plan = embed_plan(f, d, solve_flows(inst, d))
    assert evaluate_residuals(f, plan, 1e-6).ok


def test_double_technology_is_reported():
    inst = paper_one_arc()
    f = build_formulation(inst)
    d = S.uniform(inst, "CB")
    x = embed_plan(f, d, solve_flows(inst, d)).values.copy()
    x[f.catalog["x_HP[0,1]"]] = 1.0
    rep = evaluate_residuals(f, x, 1e-6)
    hit = [v for v in rep.rows if v.id == "atmost1MECT[0,1]"]
    assert hit and hit[0].residual == pytest.approx(1.0)


def test_bound_violation_is_reported():
    inst = paper_one_arc()
    f = build_formulation(inst)
    d = S.uniform(inst, "CB")
    x = embed_plan(f, d, solve_flows(inst, d)).values.copy()
    x[f.catalog["u[1]"]] = inst.physical.u_min - 1.0
    rep = evaluate_residuals(f, x, 1e-6)
    assert [v.id for v in rep.bounds] == ["u[1]"]
    assert rep.bounds[0].paper_tag == "eq:voltbounds"


def test_missing_assignment_is_an_error():
    f = build_formulation(paper_one_arc())
    with pytest.raises(KeyError, match="missing assignment"):
        evaluate_residuals(f, {"u[0]": 400.0})
