"""The network design MINLP as data: variables with boxes, typed rows, linear objective.

Every row keeps a stable human-readable id (``ohmic_in[0,1]``) and the label
of the model equation it encodes, so violation reports and exports can be
diffed across runs. Nonlinear structure is restricted to products of two
catalog variables (bilinear, or a square when both factors coincide).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .instance import GAS_TECHS, TECHS, Instance, InstanceError

LINEAR_EQ = "linear-eq"
LINEAR_INEQ = "linear-ineq"
BILINEAR_EQ = "bilinear-eq"
BILINEAR_INEQ = "bilinear-ineq"
QUADRATIC_INEQ = "quadratic-ineq"

# Constraint equations that must be carried by at least one emitted row.
ROW_TAGS = (
    "eq:atmost1MECT", "eq:installreno", "eq:firstsecren", "eq:gasrenored", "eq:ereno",
    "eq:redelec", "eq:artmove", "eq:injconst",
    "eq:sourcevolt", "eq:voltdrop", "eq:ohmic", "eq:elecbalansink", "eq:elecbalansource",
    "eq:injectmax",
    "eq:gpsource", "eq:pipebuild", "eq:gploss", "eq:builgaspiperel", "eq:refgflow",
    "eq:pbarref", "eq:DWfinal", "eq:gasbalansink", "eq:gasbalansource",
    "eq:carbontar", "eq:carbon",
)
# Equations realised as variable boxes rather than rows.
BOUND_TAGS = ("eq:voltbounds", "eq:gpbounds")
# Cost definitions realised as objective terms.
OBJECTIVE_TAGS = (
    "eq:enconpur", "eq:encontax", "eq:allocos", "eq:gridcosts", "eq:techcosts", "eq:renocosts",
)


def arc_label(inst: Instance, k: int) -> str:
    a = inst.arcs[k]
    return f"{a.i},{a.j}"


@dataclass
class VariableCatalog:
    names: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    binary: list[bool] = field(default_factory=list)
    bound_tags: dict[str, str] = field(default_factory=dict)
    index: dict[str, int] = field(default_factory=dict)

    def add(self, name: str, lb: float, ub: float, binary: bool = False, tag: str | None = None) -> int:
        if name in self.index:
            raise ValueError(f"duplicate variable {name}")
        if not (np.isfinite(lb) and np.isfinite(ub)) or lb > ub:
            raise ValueError(f"variable {name} needs a finite box, got [{lb}, {ub}]")
        self.index[name] = len(self.names)
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(binary)
        if tag:
            self.bound_tags[name] = tag
        return self.index[name]

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.index

    def __getitem__(self, name: str) -> int:
        return self.index[name]

    def get(self, name: str) -> int | None:
        return self.index.get(name)

    def lower(self) -> np.ndarray:
        return np.asarray(self.lb, dtype=float)

    def upper(self) -> np.ndarray:
        return np.asarray(self.ub, dtype=float)

    def binary_mask(self) -> np.ndarray:
        return np.asarray(self.binary, dtype=bool)


@dataclass(frozen=True)
class ConstraintRow:
    """``sum(lin) + sum(c * x_a * x_b)  <sense>  rhs``."""

    id: str
    kind: str
    lin: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    paper_tags: tuple[str, ...]
    products: tuple[tuple[float, int, int], ...] = ()

    @property
    def paper_tag(self) -> str:
        return self.paper_tags[0]

    @property
    def is_linear(self) -> bool:
        return not self.products


@dataclass(frozen=True)
class ObjectiveTerm:
    name: str
    paper_tag: str
    coefs: tuple[tuple[int, float], ...]
    constant: float = 0.0


@dataclass
class Formulation:
    instance: Instance
    catalog: VariableCatalog
    rows: list[ConstraintRow]
    terms: list[ObjectiveTerm]
    # per-arc/per-node variable indices, used by relaxation, physics embedding and branching
    layout: dict
    _compiled: dict | None = field(default=None, repr=False)

    @property
    def objective(self) -> np.ndarray:
        c = np.zeros(len(self.catalog))
        for term in self.terms:
            for idx, coef in term.coefs:
                c[idx] += coef
        return c

    @property
    def objective_constant(self) -> float:
        return sum(t.constant for t in self.terms)

    @property
    def n_vars(self) -> int:
        return len(self.catalog)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def row(self, row_id: str) -> ConstraintRow:
        for r in self.rows:
            if r.id == row_id:
                return r
        raise KeyError(row_id)

    def evaluate_objective(self, x: np.ndarray) -> float:
        return float(self.objective @ x) + self.objective_constant

    def compiled(self) -> dict:
        """Sparse matrices for fast residual evaluation."""
        if self._compiled is None:
            m = len(self.rows)
            ri, ci, vals = [], [], []
            pr, pa, pb, pc = [], [], [], []
            for r_idx, row in enumerate(self.rows):
                for j, v in row.lin:
                    ri.append(r_idx)
                    ci.append(j)
                    vals.append(v)
                for c, a, b in row.products:
                    pr.append(r_idx)
                    pa.append(a)
                    pb.append(b)
                    pc.append(c)
            self._compiled = {
                "A": sp.csr_matrix((vals, (ri, ci)), shape=(m, self.n_vars)),
                "prod_row": np.asarray(pr, dtype=np.int64),
                "prod_a": np.asarray(pa, dtype=np.int64),
                "prod_b": np.asarray(pb, dtype=np.int64),
                "prod_c": np.asarray(pc, dtype=float),
                "rhs": np.array([r.rhs for r in self.rows]),
                "sense": np.array([r.sense for r in self.rows]),
            }
        return self._compiled

    def activities(self, x: np.ndarray) -> np.ndarray:
        comp = self.compiled()
        act = comp["A"] @ x
        if comp["prod_row"].size:
            np.add.at(act, comp["prod_row"], comp["prod_c"] * x[comp["prod_a"]] * x[comp["prod_b"]])
        return act


# --------------------------------------------------------------------------- catalog


def _cable_types(inst: Instance) -> int:
    return len(inst.cable_catalog) if inst.options.cable_sizing else 0


def _pipe_types(inst: Instance) -> int:
    if inst.options.pipe_sizing and inst.pipe_catalog is not None:
        return len(inst.pipe_catalog.types)
    return 0


def _check_options(inst: Instance) -> None:
    if inst.options.cable_sizing and not inst.cable_catalog:
        raise InstanceError("cable sizing enabled but the cable catalog is empty")
    if inst.options.pipe_sizing and (inst.pipe_catalog is None or not inst.pipe_catalog.types):
        raise InstanceError("pipe sizing enabled but the pipe catalog is empty")


def arc_resistance_bounds(inst: Instance, k: int) -> tuple[float, float]:
    """Smallest and largest electric resistance arc ``k`` can take."""
    if inst.options.cable_sizing:
        rs = [inst.resistance_e(k, c) for c in range(len(inst.cable_catalog))]
        return min(rs), max(rs)
    r = inst.resistance_e(k)
    return r, r


def pipe_resistance_choices(inst: Instance, k: int) -> list[float]:
    if inst.options.pipe_sizing:
        return [inst.resistance_g(k, t) for t in range(len(inst.pipe_catalog.types))]
    return [inst.resistance_g(k)]


def build_catalog(inst: Instance) -> tuple[VariableCatalog, dict]:
    """Create every model variable with a finite box; returns (catalog, layout)."""
    _check_options(inst)
    ph = inst.physical
    cat = VariableCatalog()
    n_cable = _cable_types(inst)
    n_pipe = _pipe_types(inst)
    du = ph.ubar_max
    P = ph.pbar_max
    F = ph.gas_flow_cap
    arcs = []
    for k, a in enumerate(inst.arcs):
        lab = arc_label(inst, k)
        d = a.demand
        heat = d.has_heat
        v = {}
        for t in TECHS:
            v[f"x_{t}"] = cat.add(f"x_{t}[{lab}]", 0.0, 1.0 if heat else 0.0, binary=True)
        if heat:
            for t in TECHS:
                v[f"x1_{t}"] = cat.add(f"x1_{t}[{lab}]", 0.0, 1.0)
                v[f"x2_{t}"] = cat.add(f"x2_{t}[{lab}]", 0.0, 1.0)
                v[f"z_{t}"] = cat.add(f"z_{t}[{lab}]", 0.0, 1.0, binary=True)
        v["y_g"] = cat.add(f"y_g[{lab}]", 0.0, 1.0, binary=True)
        v["y_plus"] = cat.add(f"y_plus[{lab}]", 0.0, 1.0, binary=True)
        v["y_minus"] = cat.add(f"y_minus[{lab}]", 0.0, 1.0, binary=True)
        if n_cable > 1:
            v["y_e"] = [cat.add(f"y_e[{lab};{c}]", 0.0, 1.0, binary=True) for c in range(n_cable)]
        if n_pipe > 1:
            v["y_gk"] = [cat.add(f"y_gk[{lab};{c}]", 0.0, 1.0, binary=True) for c in range(n_pipe)]
        v["s_Esum"] = cat.add(f"s_Esum[{lab}]", 0.0, max(d.sel(t) for t in TECHS) if heat else 0.0)
        v["s_Emax"] = cat.add(f"s_Emax[{lab}]", 0.0, max(d.mel(t) for t in TECHS) if heat else 0.0)
        v["s_Gsum"] = cat.add(f"s_Gsum[{lab}]", 0.0, max(d.sgl(t) for t in TECHS) if heat else 0.0)
        v["s_Gmax"] = cat.add(f"s_Gmax[{lab}]", 0.0, max(d.mgl(t) for t in TECHS) if heat else 0.0)
        for t in TECHS:
            v[f"s_Esum_{t}"] = cat.add(f"s_Esum_{t}[{lab}]", 0.0, max(d.SEL, d.sel(t)) if heat else 0.0)
            v[f"s_Emax_{t}"] = cat.add(f"s_Emax_{t}[{lab}]", 0.0, max(d.MEL, d.mel(t)) if heat else 0.0)
        r_lo, _ = arc_resistance_bounds(inst, k)
        fe = ph.a_e * ph.u_max * du / r_lo
        v["f_e_in"] = cat.add(f"f_e_in[{lab}]", -fe, fe)
        v["f_e_out"] = cat.add(f"f_e_out[{lab}]", -fe, fe)
        v["f_g"] = cat.add(f"f_g[{lab}]", -F, F)
        v["q_bar"] = cat.add(f"q_bar[{lab}]", ph.q_min, ph.q_max)
        v["p_bar"] = cat.add(f"p_bar[{lab}]", -P, P)
        v["p_bar_plus"] = cat.add(f"p_bar_plus[{lab}]", 0.0, P)
        v["u_bar"] = cat.add(f"u_bar[{lab}]", -du, du)
        v["loss_cap"] = ph.a_e * du * du / r_lo
        arcs.append(v)

    inc, out = inst.incidence()
    nodes = []
    for i in inst.nodes:
        v = {}
        if i == 0:
            v["u"] = cat.add("u[0]", ph.u_max, ph.u_max, tag="eq:voltbounds")
            v["p"] = cat.add("p[0]", ph.p_max, ph.p_max, tag="eq:gpbounds")
        else:
            v["u"] = cat.add(f"u[{i}]", ph.u_min, ph.u_max, tag="eq:voltbounds")
            v["p"] = cat.add(f"p[{i}]", ph.p_min, ph.p_max, tag="eq:gpbounds")
        adj = inc[i] + out[i]
        v["sbar_Emax"] = cat.add(f"sbar_Emax[{i}]", 0.0, 0.5 * sum(cat.ub[arcs[k]["s_Emax"]] for k in adj))
        v["sbar_Gmax"] = cat.add(f"sbar_Gmax[{i}]", 0.0, 0.5 * sum(cat.ub[arcs[k]["s_Gmax"]] for k in adj))
        nodes.append(v)

    glob = {}
    glob["s0_Esum"] = cat.add("s0_Esum", 0.0, sum(cat.ub[v["s_Esum"]] for v in arcs))
    glob["s0_Gsum"] = cat.add("s0_Gsum", 0.0, sum(cat.ub[v["s_Gsum"]] for v in arcs))
    emax = sum(cat.ub[v["sbar_Emax"]] for v in nodes) + sum(v["loss_cap"] for v in arcs)
    glob["s0_Emax"] = cat.add("s0_Emax", 0.0, emax)
    glob["s0_Gmax"] = cat.add("s0_Gmax", 0.0, sum(cat.ub[v["sbar_Gmax"]] for v in nodes))
    chp_cap = sum(a.demand.SEL - a.demand.SEL_CHP for a in inst.arcs if a.demand.has_heat)
    glob["s_chp_Esum"] = cat.add("s_chp_Esum", 0.0, max(chp_cap, 0.0))
    layout = {"arcs": arcs, "nodes": nodes, "global": glob, "incoming": inc, "outgoing": out,
              "n_cable": n_cable, "n_pipe": n_pipe}
    return cat, layout


# --------------------------------------------------------------------------- emitters


class _Rows:
    def __init__(self):
        self.rows: list[ConstraintRow] = []

    def add(self, rid, kind, lin, sense, rhs, tags, products=()):
        lin_t = tuple((int(j), float(v)) for j, v in lin if v != 0.0)
        prod_t = tuple((float(c), int(a), int(b)) for c, a, b in products if c != 0.0)
        if isinstance(tags, str):
            tags = (tags,)
        self.rows.append(ConstraintRow(rid, kind, lin_t, sense, float(rhs), tuple(tags), prod_t))


def _ctx(inst, catalog):
    if catalog is None:
        return build_catalog(inst)
    return catalog


def emit_technology_constraints(inst: Instance, catalog=None) -> list[ConstraintRow]:
    """Exactly one heating technology on every arc with heat demand."""
    cat, lay = _ctx(inst, catalog)
    out = _Rows()
    for k, v in enumerate(lay["arcs"]):
        if inst.arcs[k].demand.has_heat:
            out.add(f"atmost1MECT[{arc_label(inst, k)}]", LINEAR_EQ,
                    [(v[f"x_{t}"], 1.0) for t in TECHS], "==", 1.0, "eq:atmost1MECT")
    return out.rows


def emit_renovation_constraints(inst: Instance, catalog=None) -> list[ConstraintRow]:
    cat, lay = _ctx(inst, catalog)
    out = _Rows()
    for k, v in enumerate(lay["arcs"]):
        if not inst.arcs[k].demand.has_heat:
            continue
        lab = arc_label(inst, k)
        for t in TECHS:
            x, x1, x2, z = v[f"x_{t}"], v[f"x1_{t}"], v[f"x2_{t}"], v[f"z_{t}"]
            out.add(f"installreno[{lab},{t}]", LINEAR_INEQ, [(x, 1.0), (x1, -1.0)], ">=", 0.0, "eq:installreno")
            out.add(f"firstsecren_order[{lab},{t}]", LINEAR_INEQ, [(x1, 1.0), (x2, -1.0)], ">=", 0.0,
                    "eq:firstsecren")
            out.add(f"firstsecren_done[{lab},{t}]", LINEAR_INEQ, [(x1, 1.0), (z, -1.0)], ">=", 0.0,
                    "eq:firstsecren")
            out.add(f"firstsecren_start[{lab},{t}]", LINEAR_INEQ, [(x2, 1.0), (z, -1.0)], "<=", 0.0,
                    "eq:firstsecren")
    return out.rows


def _reduced(v, t, mu1, mu2, scale):
    """Terms of ``scale * (x_t - mu1 x1_t - mu2 x2_t)``; renovation only on heat arcs."""
    terms = [(v[f"x_{t}"], scale)]
    if f"x1_{t}" in v:
        terms += [(v[f"x1_{t}"], -mu1 * scale), (v[f"x2_{t}"], -mu2 * scale)]
    return terms


def _merge(terms):
    acc = {}
    for j, c in terms:
        acc[j] = acc.get(j, 0.0) + c
    return list(acc.items())


def emit_demand_coupling(inst: Instance, catalog=None) -> list[ConstraintRow]:
    cat, lay = _ctx(inst, catalog)
    mu1, mu2 = inst.costs.mu1, inst.costs.mu2
    out = _Rows()
    for k, v in enumerate(lay["arcs"]):
        lab = arc_label(inst, k)
        d = inst.arcs[k].demand
        gsum = [(v["s_Gsum"], 1.0)]
        gmax = [(v["s_Gmax"], 1.0)]
        for t in GAS_TECHS:
            gsum += _reduced(v, t, mu1, mu2, -d.sgl(t))
            gmax += _reduced(v, t, mu1, mu2, -d.mgl(t))
        out.add(f"gasrenored_sum[{lab}]", LINEAR_EQ, _merge(gsum), "==", 0.0, "eq:gasrenored")
        out.add(f"gasrenored_max[{lab}]", LINEAR_EQ, _merge(gmax), "==", 0.0, "eq:gasrenored")
        for t in TECHS:
            esum = [(v[f"s_Esum_{t}"], 1.0), (v[f"x_{t}"], -d.SEL)] + _reduced(v, t, mu1, mu2, -(d.sel(t) - d.SEL))
            emax = [(v[f"s_Emax_{t}"], 1.0), (v[f"x_{t}"], -d.MEL)] + _reduced(v, t, mu1, mu2, -(d.mel(t) - d.MEL))
            out.add(f"ereno_sum[{lab},{t}]", LINEAR_EQ, _merge(esum), "==", 0.0, "eq:ereno")
            out.add(f"ereno_max[{lab},{t}]", LINEAR_EQ, _merge(emax), "==", 0.0, "eq:ereno")
        out.add(f"redelec_sum[{lab}]", LINEAR_EQ,
                [(v["s_Esum"], 1.0)] + [(v[f"s_Esum_{t}"], -1.0) for t in TECHS], "==", 0.0, "eq:redelec")
        out.add(f"redelec_max[{lab}]", LINEAR_EQ,
                [(v["s_Emax"], 1.0)] + [(v[f"s_Emax_{t}"], -1.0) for t in TECHS], "==", 0.0, "eq:redelec")
    arcs = lay["arcs"]
    for i, nv in enumerate(lay["nodes"]):
        adj = lay["incoming"][i] + lay["outgoing"][i]
        out.add(f"artmove_E[{i}]", LINEAR_EQ,
                _merge([(nv["sbar_Emax"], 1.0)] + [(arcs[k]["s_Emax"], -0.5) for k in adj]), "==", 0.0,
                "eq:artmove")
        out.add(f"artmove_G[{i}]", LINEAR_EQ,
                _merge([(nv["sbar_Gmax"], 1.0)] + [(arcs[k]["s_Gmax"], -0.5) for k in adj]), "==", 0.0,
                "eq:artmove")
    g = lay["global"]
    out.add("injconst_E", LINEAR_EQ, [(g["s0_Esum"], 1.0)] + [(v["s_Esum"], -1.0) for v in arcs], "==", 0.0,
            "eq:injconst")
    out.add("injconst_G", LINEAR_EQ, [(g["s0_Gsum"], 1.0)] + [(v["s_Gsum"], -1.0) for v in arcs], "==", 0.0,
            "eq:injconst")
    return out.rows


def _ohmic_rows(out, lab, suffix, v, ui, uj, R, a, sense="==", big_m=None, sel=None):
    """``R f_in = a u_j ubar`` and ``R f_out = a u_i ubar``, optionally big-M activated by ``sel``."""
    for name, f, u in (("in", v["f_e_in"], uj), ("out", v["f_e_out"], ui)):
        lin = [(f, R)]
        prod = [(-a, u, v["u_bar"])]
        if big_m is None:
            out.add(f"ohmic_{name}[{lab}]", BILINEAR_EQ, lin, "==", 0.0, "eq:ohmic", prod)
        else:
            M = big_m[name]
            out.add(f"ohmic_{name}_le[{lab};{suffix}]", BILINEAR_INEQ, lin + [(sel, M)], "<=", M, "eq:ohmic", prod)
            out.add(f"ohmic_{name}_ge[{lab};{suffix}]", BILINEAR_INEQ, lin + [(sel, -M)], ">=", -M, "eq:ohmic", prod)


def emit_electric_flow(inst: Instance, catalog=None) -> list[ConstraintRow]:
    cat, lay = _ctx(inst, catalog)
    ph = inst.physical
    out = _Rows()
    nodes = lay["nodes"]
    out.add("sourcevolt", LINEAR_EQ, [(nodes[0]["u"], 1.0)], "==", ph.u_max, "eq:sourcevolt")
    n_cable = lay["n_cable"]
    for k, v in enumerate(lay["arcs"]):
        a = inst.arcs[k]
        lab = arc_label(inst, k)
        ui, uj = nodes[a.i]["u"], nodes[a.j]["u"]
        out.add(f"voltdrop[{lab}]", LINEAR_EQ, [(v["u_bar"], 1.0), (ui, -1.0), (uj, 1.0)], "==", 0.0, "eq:voltdrop")
        if n_cable > 1:
            # activation bound |R f - a u ubar| <= R |f|max + a |u ubar|max
            wmax = ph.u_max * ph.ubar_max
            for c in range(n_cable):
                R = inst.resistance_e(k, c)
                M = {name: R * cat.ub[v[f"f_e_{name}"]] + ph.a_e * wmax for name in ("in", "out")}
                _ohmic_rows(out, lab, c, v, ui, uj, R, ph.a_e, big_m=M, sel=v["y_e"][c])
        else:
            R = inst.resistance_e(k, 0 if n_cable == 1 else None)
            _ohmic_rows(out, lab, None, v, ui, uj, R, ph.a_e)
    arcs = lay["arcs"]
    for i, nv in enumerate(nodes):
        lin = [(arcs[k]["f_e_in"], 1.0) for k in lay["incoming"][i]]
        lin += [(arcs[k]["f_e_out"], -1.0) for k in lay["outgoing"][i]]
        lin.append((nv["sbar_Emax"], -1.0))
        if i == 0:
            lin.append((lay["global"]["s0_Emax"], 1.0))
            out.add("elecbalansource", LINEAR_EQ, lin, "==", 0.0, "eq:elecbalansource")
        else:
            out.add(f"elecbalansink[{i}]", LINEAR_EQ, lin, "==", 0.0, "eq:elecbalansink")
    out.add("injectmax", LINEAR_INEQ,
            [(lay["global"]["s0_Emax"], 1.0)] + [(nv["sbar_Emax"], -1.0) for nv in nodes], ">=", 0.0,
            "eq:injectmax")
    if n_cable > 1:
        for k, v in enumerate(arcs):
            out.add(f"cablesel[{arc_label(inst, k)}]", LINEAR_EQ, [(y, 1.0) for y in v["y_e"]], "==", 1.0,
                    "eq:ohmic")
    return out.rows


def emit_gas_flow(inst: Instance, catalog=None) -> list[ConstraintRow]:
    cat, lay = _ctx(inst, catalog)
    ph = inst.physical
    P = ph.pbar_max
    a2 = ph.a_g**2
    F = ph.gas_flow_cap
    out = _Rows()
    nodes = lay["nodes"]
    out.add("gpsource", LINEAR_EQ, [(nodes[0]["p"], 1.0)], "==", ph.p_max, "eq:gpsource")
    n_pipe = lay["n_pipe"]
    for k, v in enumerate(lay["arcs"]):
        a = inst.arcs[k]
        lab = arc_label(inst, k)
        yg, yp, ym = v["y_g"], v["y_plus"], v["y_minus"]
        q, pb, pp, f = v["q_bar"], v["p_bar"], v["p_bar_plus"], v["f_g"]
        for t in GAS_TECHS:
            out.add(f"pipebuild_{t}[{lab}]", LINEAR_INEQ, [(v[f"x_{t}"], 1.0), (yg, -1.0)], "<=", 0.0,
                    "eq:pipebuild")
        out.add(f"gploss[{lab}]", LINEAR_EQ, [(pb, 1.0), (nodes[a.i]["p"], -1.0), (nodes[a.j]["p"], 1.0)], "==",
                0.0, "eq:gploss")
        # flow direction: (1 - y+) qmin <= q <= (1 - y-) qmax, same for pbar, y+ + y- = 1
        out.add(f"refgflow_qlo[{lab}]", LINEAR_INEQ, [(q, 1.0), (yp, ph.q_min)], ">=", ph.q_min, "eq:refgflow")
        out.add(f"refgflow_qhi[{lab}]", LINEAR_INEQ, [(q, 1.0), (ym, ph.q_max)], "<=", ph.q_max, "eq:refgflow")
        out.add(f"refgflow_plo[{lab}]", LINEAR_INEQ, [(pb, 1.0), (yp, -P)], ">=", -P, "eq:refgflow")
        out.add(f"refgflow_phi[{lab}]", LINEAR_INEQ, [(pb, 1.0), (ym, P)], "<=", P, "eq:refgflow")
        out.add(f"refgflow_dir[{lab}]", LINEAR_EQ, [(yp, 1.0), (ym, 1.0)], "==", 1.0, "eq:refgflow")
        out.add(f"qcouple[{lab}]", LINEAR_EQ, [(q, 1.0), (f, -1.0 / ph.a_g)], "==", 0.0, "eq:refgflow")
        # pbar_plus = (y+ - y-) pbar, McCormick over (y+ - y-) in [-1, 1], pbar in [-P, P]
        out.add(f"pbarref_1[{lab}]", LINEAR_INEQ, [(pp, 1.0), (yp, -P), (ym, P), (pb, -1.0)], ">=", -P, "eq:pbarref")
        out.add(f"pbarref_2[{lab}]", LINEAR_INEQ, [(pp, 1.0), (yp, P), (ym, -P), (pb, 1.0)], ">=", -P, "eq:pbarref")
        out.add(f"pbarref_3[{lab}]", LINEAR_INEQ, [(pp, 1.0), (yp, P), (ym, -P), (pb, -1.0)], "<=", P, "eq:pbarref")
        out.add(f"pbarref_4[{lab}]", LINEAR_INEQ, [(pp, 1.0), (yp, -P), (ym, P), (pb, 1.0)], "<=", P, "eq:pbarref")
        if n_pipe > 1:
            out.add(f"pipesel[{lab}]", LINEAR_EQ, [(y, 1.0) for y in v["y_gk"]] + [(yg, -1.0)], "==", 0.0,
                    "eq:DWfinal")
            for c, y in enumerate(v["y_gk"]):
                R = inst.resistance_g(k, c)
                M = R * F * F
                sq = [(R, f, f)]
                out.add(f"DWfinal_lo[{lab};{c}]", QUADRATIC_INEQ, [(pp, -a2), (y, -a2 * P)], ">=", -a2 * P,
                        "eq:DWfinal", sq)
                out.add(f"DWfinal_up[{lab};{c}]", QUADRATIC_INEQ, [(pp, -a2), (y, M)], "<=", M, "eq:DWfinal", sq)
                out.add(f"DWfinal_cap[{lab};{c}]", QUADRATIC_INEQ, [(y, M - a2 * P)], "<=", M, "eq:DWfinal", sq)
        else:
            R = inst.resistance_g(k, 0 if n_pipe == 1 else None)
            sq = [(R, f, f)]
            out.add(f"DWfinal_lo[{lab}]", QUADRATIC_INEQ, [(pp, -a2), (yg, -a2 * P)], ">=", -a2 * P, "eq:DWfinal", sq)
            out.add(f"DWfinal_up[{lab}]", QUADRATIC_INEQ, [(pp, -a2)], "<=", 0.0, "eq:DWfinal", sq)
            out.add(f"DWfinal_cap[{lab}]", QUADRATIC_INEQ, [(yg, -a2 * P)], "<=", 0.0, "eq:DWfinal", sq)
        # f = y_g f, encoded as -F y_g <= f <= F y_g
        out.add(f"builgaspiperel_hi[{lab}]", LINEAR_INEQ, [(f, 1.0), (yg, -F)], "<=", 0.0, "eq:builgaspiperel")
        out.add(f"builgaspiperel_lo[{lab}]", LINEAR_INEQ, [(f, 1.0), (yg, F)], ">=", 0.0, "eq:builgaspiperel")
    arcs = lay["arcs"]
    for i, nv in enumerate(nodes):
        lin = [(arcs[k]["f_g"], 1.0) for k in lay["incoming"][i]]
        lin += [(arcs[k]["f_g"], -1.0) for k in lay["outgoing"][i]]
        lin.append((nv["sbar_Gmax"], -1.0))
        if i == 0:
            lin.append((lay["global"]["s0_Gmax"], 1.0))
            out.add("gasbalansource", LINEAR_EQ, lin, "==", 0.0, "eq:gasbalansource")
        else:
            out.add(f"gasbalansink[{i}]", LINEAR_EQ, lin, "==", 0.0, "eq:gasbalansink")
    return out.rows


def emit_cable_option(inst: Instance, catalog=None) -> list[ConstraintRow]:
    """Cable selection rows and the per-type Ohmic blocks (subset of the electric rows)."""
    if not inst.options.cable_sizing or not inst.cable_catalog:
        raise InstanceError("cable option requested but cable sizing is off or the catalog is empty")
    rows = emit_electric_flow(inst, catalog)
    return [r for r in rows if r.id.startswith("cablesel") or ";" in r.id]


def emit_pipe_option(inst: Instance, catalog=None) -> list[ConstraintRow]:
    if not inst.options.pipe_sizing or inst.pipe_catalog is None or not inst.pipe_catalog.types:
        raise InstanceError("pipe option requested but pipe sizing is off or the catalog is empty")
    rows = emit_gas_flow(inst, catalog)
    return [r for r in rows if r.id.startswith("pipesel") or ";" in r.id]


def emit_objective_and_emission(inst: Instance, catalog=None) -> tuple[list[ObjectiveTerm], list[ConstraintRow]]:
    cat, lay = _ctx(inst, catalog)
    c = inst.costs
    g = lay["global"]
    arcs = lay["arcs"]
    terms = [
        ObjectiveTerm("C_energy", "eq:enconpur", ((g["s0_Esum"], c.alpha_p_e), (g["s0_Gsum"], c.alpha_p_g))),
        ObjectiveTerm("C_tax", "eq:encontax", ((g["s0_Esum"], c.beta_e), (g["s_chp_Esum"], c.beta_e * c.t_adv),
                                               (g["s0_Gsum"], c.beta_g))),
        ObjectiveTerm("C_allocation", "eq:allocos", ((g["s0_Emax"], c.alpha_a_e), (g["s0_Gmax"], c.alpha_a_g))),
    ]
    grid = []
    grid_const = 0.0
    for k, v in enumerate(arcs):
        if lay["n_pipe"] > 1:
            grid += [(y, inst.pipe_cost(k, t)) for t, y in enumerate(v["y_gk"])]
        else:
            grid.append((v["y_g"], inst.pipe_cost(k, 0 if lay["n_pipe"] == 1 else None)))
    terms.append(ObjectiveTerm("C_grid", "eq:gridcosts", tuple(grid), grid_const))
    if inst.options.cable_sizing:
        cable = []
        const = 0.0
        for k, v in enumerate(arcs):
            if lay["n_cable"] > 1:
                cable += [(y, inst.cable_cost(k, t)) for t, y in enumerate(v["y_e"])]
            else:
                const += inst.cable_cost(k, 0)
        terms.append(ObjectiveTerm("C_grid_e", "eq:gridcosts", tuple(cable), const))
    tech = []
    renov = []
    for k, v in enumerate(arcs):
        shl = inst.arcs[k].demand.SHL
        for t in TECHS:
            tech.append((v[f"x_{t}"], c.gamma[t]))
            if f"x1_{t}" in v:
                renov += [(v[f"x1_{t}"], shl * c.nu1), (v[f"x2_{t}"], shl * c.nu2)]
    terms.append(ObjectiveTerm("C_tech", "eq:techcosts", tuple(tech)))
    terms.append(ObjectiveTerm("C_renov", "eq:renocosts", tuple(renov)))

    out = _Rows()
    out.add("carbontar", LINEAR_INEQ, [(g["s0_Esum"], c.kappa_e), (g["s0_Gsum"], c.kappa_g)], "<=", c.E_target,
            ("eq:carbontar", "eq:carbon"))
    chp = [(g["s_chp_Esum"], 1.0)]
    for k, v in enumerate(arcs):
        d = inst.arcs[k].demand
        chp += _reduced(v, "CHP", c.mu1, c.mu2, -(d.SEL - d.SEL_CHP))
    out.add("schp_def", LINEAR_EQ, _merge(chp), "==", 0.0, "eq:encontax")
    return terms, out.rows


def build_formulation(inst: Instance) -> Formulation:
    """Assemble the full model; row order is deterministic."""
    cat, lay = build_catalog(inst)
    ctx = (cat, lay)
    rows = []
    rows += emit_technology_constraints(inst, ctx)
    rows += emit_renovation_constraints(inst, ctx)
    rows += emit_demand_coupling(inst, ctx)
    rows += emit_electric_flow(inst, ctx)
    rows += emit_gas_flow(inst, ctx)
    terms, obj_rows = emit_objective_and_emission(inst, ctx)
    rows += obj_rows
    ids = [r.id for r in rows]
    if len(set(ids)) != len(ids):
        raise AssertionError("row ids are not unique")
    return Formulation(inst, cat, rows, terms, lay)


# --------------------------------------------------------------------------- residuals


@dataclass
class Violation:
    id: str
    residual: float
    paper_tag: str

    def __str__(self) -> str:
        return f"{self.id} ({self.paper_tag}): {self.residual:+.6g}"


@dataclass
class ViolationReport:
    residuals: np.ndarray
    rows: list[Violation]
    bounds: list[Violation]
    integrality: list[Violation]

    @property
    def ok(self) -> bool:
        return not (self.rows or self.bounds or self.integrality)

    @property
    def max_violation(self) -> float:
        vals = [abs(v.residual) for v in self.rows + self.bounds + self.integrality]
        return max(vals, default=0.0)

    def all(self) -> list[Violation]:
        return self.rows + self.bounds + self.integrality

    def __str__(self) -> str:
        if self.ok:
            return "no violations"
        return "\n".join(str(v) for v in self.all())


def point_vector(f: Formulation, point) -> np.ndarray:
    """Accept a PlanPoint, a name->value mapping or a full vector."""
    if hasattr(point, "values") and isinstance(getattr(point, "values"), np.ndarray):
        x = point.values
    elif isinstance(point, dict):
        missing = [n for n in f.catalog.names if n not in point]
        if missing:
            raise KeyError(f"missing assignment for {len(missing)} variable(s), e.g. {missing[0]}")
        x = np.array([float(point[n]) for n in f.catalog.names])
    else:
        x = np.asarray(point, dtype=float)
    if x.shape != (f.n_vars,):
        raise KeyError(f"point assigns {x.shape} values, catalog has {f.n_vars} variables")
    return x


def evaluate_residuals(f: Formulation, point, tol: float = 1e-6) -> ViolationReport:
    """Signed residual ``activity - rhs`` of every row plus bound/integrality checks."""
    x = point_vector(f, point)
    comp = f.compiled()
    res = f.activities(x) - comp["rhs"]
    rows = []
    for r_idx, row in enumerate(f.rows):
        r = res[r_idx]
        bad = abs(r) > tol if row.sense == "==" else (r > tol if row.sense == "<=" else -r > tol)
        if bad:
            rows.append(Violation(row.id, float(r), row.paper_tag))
    lb, ub = f.catalog.lower(), f.catalog.upper()
    bounds = []
    for j in np.flatnonzero((x < lb - tol) | (x > ub + tol)):
        name = f.catalog.names[j]
        r = x[j] - lb[j] if x[j] < lb[j] else x[j] - ub[j]
        bounds.append(Violation(name, float(r), f.catalog.bound_tags.get(name, "bounds")))
    integ = []
    binm = f.catalog.binary_mask()
    for j in np.flatnonzero(binm & (np.abs(x - np.round(x)) > tol)):
        integ.append(Violation(f.catalog.names[j], float(x[j] - np.round(x[j])), "integrality"))
    return ViolationReport(res, rows, bounds, integ)


# --------------------------------------------------------------------------- export


def _fmt(v: float) -> str:
    return repr(float(v))


def _row_terms(f: Formulation, row: ConstraintRow) -> list[str]:
    names = f.catalog.names
    parts = [f"{_fmt(c)}*{names[j]}" for j, c in row.lin]
    for c, a, b in row.products:
        parts.append(f"{_fmt(c)}*{names[a]}^2" if a == b else f"{_fmt(c)}*{names[a]}*{names[b]}")
    return parts


def export_text(f: Formulation) -> str:
    """Plain-text algebraic dump.

    Layout: ``VAR name lb ub {C|B}`` lines, then ``ROW id | kind | terms | sense rhs | tags``,
    then ``OBJ name | tag | terms | constant``.
    """
    cat = f.catalog
    lines = [f"# decnet formulation: {len(cat)} variables, {len(f.rows)} rows"]
    for j, name in enumerate(cat.names):
        lines.append(f"VAR {name} {_fmt(cat.lb[j])} {_fmt(cat.ub[j])} {'B' if cat.binary[j] else 'C'}")
    for row in f.rows:
        terms = " ".join(_row_terms(f, row))
        lines.append(f"ROW {row.id} | {row.kind} | {terms} | {row.sense} {_fmt(row.rhs)} | {','.join(row.paper_tags)}")
    for t in f.terms:
        terms = " ".join(f"{_fmt(c)}*{cat.names[j]}" for j, c in t.coefs)
        lines.append(f"OBJ {t.name} | {t.paper_tag} | {terms} | {_fmt(t.constant)}")
    return "\n".join(lines) + "\n"


def export_json(f: Formulation) -> str:
    cat = f.catalog
    doc = {
        "variables": [
            {"name": n, "lb": cat.lb[j], "ub": cat.ub[j], "binary": cat.binary[j]} for j, n in enumerate(cat.names)
        ],
        "rows": [
            {
                "id": r.id,
                "kind": r.kind,
                "linear": [[cat.names[j], c] for j, c in r.lin],
                "products": [[c, cat.names[a], cat.names[b]] for c, a, b in r.products],
                "sense": r.sense,
                "rhs": r.rhs,
                "paper_tags": list(r.paper_tags),
            }
            for r in f.rows
        ],
        "objective": [
            {"name": t.name, "paper_tag": t.paper_tag, "terms": [[cat.names[j], c] for j, c in t.coefs],
             "constant": t.constant}
            for t in f.terms
        ],
    }
    return json.dumps(doc, indent=1)


def tag_coverage(f: Formulation) -> dict[str, list[str]]:
    """Equation labels missing from rows, bounds and objective terms respectively."""
    row_tags = {t for r in f.rows for t in r.paper_tags}
    bound_tags = set(f.catalog.bound_tags.values())
    obj_tags = {t.paper_tag for t in f.terms}
    return {
        "rows": [t for t in ROW_TAGS if t not in row_tags],
        "bounds": [t for t in BOUND_TAGS if t not in bound_tags],
        "objective": [t for t in OBJECTIVE_TAGS if t not in obj_tags],
    }


def rows_by_tag(rows: Iterable[ConstraintRow], tag: str) -> list[ConstraintRow]:
    return [r for r in rows if tag in r.paper_tags]
