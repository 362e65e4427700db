"""Full variable assignments (PlanPoint) and their construction from decisions + physics."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .formulation import Formulation, VariableCatalog
from .instance import GAS_TECHS, TECHS, Instance
from .physics import FlowState, PlanDecisions, arc_loads, node_peaks


@dataclass
class PlanPoint:
    catalog: VariableCatalog
    values: np.ndarray

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.catalog[name]])

    def get(self, name: str, default: float = 0.0) -> float:
        j = self.catalog.get(name)
        return default if j is None else float(self.values[j])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.catalog.names, self.values)}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1)

    @staticmethod
    def from_mapping(catalog: VariableCatalog, values: dict[str, float]) -> PlanPoint:
        missing = [n for n in catalog.names if n not in values]
        if missing:
            raise KeyError(f"missing assignment for {len(missing)} variable(s), e.g. {missing[0]}")
        return PlanPoint(catalog, np.array([float(values[n]) for n in catalog.names]))


def embed_plan(f: Formulation, d: PlanDecisions, state: FlowState) -> PlanPoint:
    """Exact-physics PlanPoint for decisions ``d`` with solved flows ``state``."""
    inst = f.instance
    lay = f.layout
    x = np.zeros(f.n_vars)
    loads = arc_loads(inst, d)
    peaks = node_peaks(inst, d, loads)
    ph = inst.physical
    ubar = state.u_bar(inst)
    pbar = state.p_bar(inst)
    for k, v in enumerate(lay["arcs"]):
        t = d.tech[k]
        for ti, tech in enumerate(TECHS):
            on = 1.0 if t == tech else 0.0
            x[v[f"x_{tech}"]] = on
            if f"x1_{tech}" in v:
                x1 = d.x1[k] * on
                x2 = d.x2[k] * on
                x[v[f"x1_{tech}"]] = x1
                x[v[f"x2_{tech}"]] = x2
                x[v[f"z_{tech}"]] = 1.0 if x2 > 0.0 else 0.0
            x[v[f"s_Esum_{tech}"]] = loads.s_Esum_t[k, ti]
            x[v[f"s_Emax_{tech}"]] = loads.s_Emax_t[k, ti]
        x[v["y_g"]] = 1.0 if d.y_g[k] else 0.0
        fg = state.f_g[k]
        plus = fg > 0.0 or (fg == 0.0 and pbar[k] >= 0.0)
        x[v["y_plus"]] = 1.0 if plus else 0.0
        x[v["y_minus"]] = 0.0 if plus else 1.0
        if "y_e" in v:
            for c, j in enumerate(v["y_e"]):
                x[j] = 1.0 if d.cable_of(k) == c else 0.0
        if "y_gk" in v:
            for c, j in enumerate(v["y_gk"]):
                x[j] = 1.0 if d.y_g[k] and d.pipe_of(k) == c else 0.0
        x[v["s_Esum"]] = loads.s_Esum[k]
        x[v["s_Emax"]] = loads.s_Emax[k]
        x[v["s_Gsum"]] = loads.s_Gsum[k]
        x[v["s_Gmax"]] = loads.s_Gmax[k]
        x[v["f_e_in"]] = state.f_e_in[k]
        x[v["f_e_out"]] = state.f_e_out[k]
        x[v["f_g"]] = fg
        x[v["q_bar"]] = fg / ph.a_g
        x[v["p_bar"]] = pbar[k]
        x[v["p_bar_plus"]] = (1.0 if plus else -1.0) * pbar[k]
        x[v["u_bar"]] = ubar[k]
    inc, out = lay["incoming"], lay["outgoing"]
    for i, nv in enumerate(lay["nodes"]):
        x[nv["u"]] = state.u[i]
        x[nv["p"]] = state.p[i]
        x[nv["sbar_Emax"]] = peaks.sbar_E[i]
        x[nv["sbar_Gmax"]] = peaks.sbar_G[i]
    g = lay["global"]
    x[g["s0_Esum"]] = loads.s_Esum.sum()
    x[g["s0_Gsum"]] = loads.s_Gsum.sum()
    x[g["s0_Emax"]] = (peaks.sbar_E[0] + sum(state.f_e_out[k] for k in out[0])
                       - sum(state.f_e_in[k] for k in inc[0]))
    x[g["s0_Gmax"]] = peaks.sbar_G[0] + sum(state.f_g[k] for k in out[0]) - sum(state.f_g[k] for k in inc[0])
    x[g["s_chp_Esum"]] = loads.s_chp.sum()
    return PlanPoint(f.catalog, x)


def decisions_from_point(f: Formulation, x: np.ndarray) -> PlanDecisions:
    """Read decisions off an (integral) point: technology by argmax, renovation of the chosen tech."""
    inst = f.instance
    tech, x1, x2, yg, cable, pipe = [], [], [], [], [], []
    for k, v in enumerate(f.layout["arcs"]):
        if inst.arcs[k].demand.has_heat:
            vals = [x[v[f"x_{t}"]] for t in TECHS]
            t = TECHS[int(np.argmax(vals))]
            a1 = float(np.clip(x[v[f"x1_{t}"]], 0.0, 1.0))
            a2 = float(np.clip(x[v[f"x2_{t}"]], 0.0, a1))
        else:
            t, a1, a2 = None, 0.0, 0.0
        tech.append(t)
        x1.append(a1)
        x2.append(a2)
        built = x[v["y_g"]] > 0.5 or t in GAS_TECHS
        yg.append(bool(built))
        if "y_e" in v:
            cable.append(int(np.argmax([x[j] for j in v["y_e"]])))
        elif f.layout["n_cable"] == 1:
            cable.append(0)
        if "y_gk" in v:
            pipe.append(int(np.argmax([x[j] for j in v["y_gk"]])) if built else None)
        elif f.layout["n_pipe"] == 1:
            pipe.append(0 if built else None)
    return PlanDecisions(tuple(tech), tuple(x1), tuple(x2), tuple(yg), tuple(cable), tuple(pipe))
