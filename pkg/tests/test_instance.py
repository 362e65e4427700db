import json
import math
from dataclasses import replace
from decimal import Decimal, getcontext
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decnet.instance import (
    GAS_TECHS,
    TOPOLOGIES,
    Arc,
    InstanceError,
    generate_instance,
    instance_to_dict,
    load_instance,
    paper_one_arc,
    pipe_resistance,
    read_instance,
    save_instance,
    validate_instance,
)

DATA = Path(__file__).resolve().parent.parent / "data"


def doc_of(inst):
    return instance_to_dict(inst)


def test_load_table_instance_keeps_published_values():
    inst = load_instance(save_instance(paper_one_arc()))
    assert inst.arcs[0].demand.SGL_CB == 73478
    assert inst.arcs[0].demand.MGL_CHP == 55.8
    assert inst.is_tree


def test_shipped_sample_is_marked_synthetic_and_valid():
    inst = read_instance(DATA / "paper_one_arc.json")
    assert inst.meta.get("synthetic")
    assert validate_instance(inst).ok


def test_gas_for_heat_pump_is_rejected():
    doc = doc_of(paper_one_arc())
    doc["arcs"][0]["demand"]["SGL_HP"] = 5
    with pytest.raises(InstanceError, match="SGL_HP must be 0"):
        load_instance(json.dumps(doc))


def test_renovation_fraction_order_is_rejected():
    doc = doc_of(paper_one_arc())
    doc["costs"]["mu1"], doc["costs"]["mu2"] = 0.2, 0.3
    with pytest.raises(InstanceError, match="mu1 > mu2 violated"):
        load_instance(json.dumps(doc))


def test_parse_error_names_line_and_column():
    with pytest.raises(InstanceError, match=r"line 2, column"):
        load_instance('{"nodes": [0, 1],\n "arcs": [,]}')


def test_unknown_and_missing_keys_are_rejected():
    doc = doc_of(paper_one_arc())
    doc["colour"] = "blue"
    with pytest.raises(InstanceError, match="unknown key"):
        load_instance(json.dumps(doc))
    doc = doc_of(paper_one_arc())
    del doc["arcs"][0]["demand"]["MHL"]
    with pytest.raises(InstanceError, match="missing key"):
        load_instance(json.dumps(doc))
    doc = doc_of(paper_one_arc())
    doc["arcs"][0]["length_m"] = "long"
    with pytest.raises(InstanceError, match="expected a number"):
        load_instance(json.dumps(doc))


def test_valid_table_instance_has_empty_report():
    rep = validate_instance(paper_one_arc())
    assert rep.ok and rep.violations == []


def test_disconnected_node_is_reported():
    inst = paper_one_arc()
    inst = replace(inst, nodes=(0, 1, 2))
    assert "graph not connected" in validate_instance(inst).violations


def test_chp_consistency_is_checked():
    inst = paper_one_arc()
    arc = inst.arcs[0]
    bad = replace(arc, demand=replace(arc.demand, SEL_CHP=arc.demand.SEL + 1.0))
    rep = validate_instance(replace(inst, arcs=(bad,)))
    assert any("CHP consistency" in v for v in rep.violations)


def test_structural_defects_are_reported():
    inst = paper_one_arc()
    arc = inst.arcs[0]
    loop = Arc(1, 1, 10.0, arc.demand, R_e=0.1, R_g=0.1, zeta_g=1.0)
    rep = validate_instance(replace(inst, arcs=(arc, arc, loop)))
    text = " ".join(rep.violations)
    assert "self-loop" in text and "duplicate arc" in text


def test_resistance_given_twice_is_an_error():
    inst = generate_instance(3, seed=1, cable_sizing=True)
    arc = replace(inst.arcs[0], R_e=0.5)
    rep = validate_instance(replace(inst, arcs=(arc,) + inst.arcs[1:]))
    assert any("R_e given" in v for v in rep.violations)


def test_generator_small_tree_is_valid():
    inst = generate_instance(2, "tree", seed=1)
    assert inst.n_arcs == 1
    assert validate_instance(inst).ok


def test_generator_is_deterministic():
    a = generate_instance(8, "tree", seed=7)
    b = generate_instance(8, "tree", seed=7)
    assert save_instance(a) == save_instance(b)
    assert save_instance(a) != save_instance(generate_instance(8, "tree", seed=8))


def test_generated_grid_has_cycles():
    inst = generate_instance(8, "grid", seed=7)
    assert inst.n_arcs > inst.n_nodes - 1
    assert not inst.is_tree
    assert validate_instance(inst).ok


def test_generator_rejects_unknown_topology():
    with pytest.raises(InstanceError, match="unsupported topology"):
        generate_instance(4, "star")


def test_pipe_resistance_matches_high_precision_evaluation():
    getcontext().prec = 40
    pi = Decimal("3.141592653589793238462643383279502884197")
    d, length, rho, v = Decimal("0.1"), Decimal(100), Decimal("0.7"), Decimal(6)
    lam = Decimal("0.3164") / (v * rho * d) ** Decimal("0.25")
    expected = lam * 8 * rho * length / (pi**2 * d**5)
    assert pipe_resistance(0.1, 100.0) == pytest.approx(float(expected), rel=1e-13)


def test_pipe_resistance_scaling_laws():
    base = pipe_resistance(0.1, 100.0)
    assert pipe_resistance(0.1, 200.0) == pytest.approx(2.0 * base, rel=1e-14)
    assert base / pipe_resistance(0.2, 100.0) == pytest.approx(2.0**5.25, rel=1e-13)


gen_args = st.tuples(st.integers(2, 12), st.sampled_from(TOPOLOGIES), st.integers(0, 10**6),
                     st.floats(0.2, 3.0), st.floats(0.0, 1.0), st.booleans(), st.booleans())


@settings(max_examples=60, deadline=None)
@given(gen_args)
def test_generated_instances_are_valid_and_round_trip(args):
    n, topo, seed, scale, heat, cable, pipe = args
    inst = generate_instance(n, topo, seed, scale, heat, cable, pipe)
    assert validate_instance(inst).ok
    again = load_instance(save_instance(inst))
    assert again == inst
    for arc in again.arcs:
        for t in GAS_TECHS:
            assert arc.demand.sgl(t) >= arc.demand.SHL
            assert arc.demand.mgl(t) >= arc.demand.MHL


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(1.0, 1000.0))
def test_pipe_resistance_positive_and_linear_in_length(d, length):
    r = pipe_resistance(d, length)
    assert r > 0.0 and math.isfinite(r)
    assert pipe_resistance(d, 3.0 * length) == pytest.approx(3.0 * r, rel=1e-12)
