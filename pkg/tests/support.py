"""Small builders shared by the test modules."""

from __future__ import annotations

from dataclasses import replace
from fractions import Fraction

import numpy as np

from decnet.formulation import Formulation
from decnet.instance import DEFAULT_COSTS, DEFAULT_PHYSICAL, Arc, ArcDemand, Instance
from decnet.physics import PlanDecisions


def demand(sel=1000.0, shl=2000.0, mel=1.0, mhl=2.0, *, gas_peak=None, hp_extra=0.6, chp_share=0.8) -> ArcDemand:
    """A consistent demand record; ``gas_peak`` sets MGL_CB (and MGL_CHP slightly above it)."""
    mgl_cb = 1.1 * mhl if gas_peak is None else gas_peak
    return ArcDemand(
        SEL=sel, SHL=shl, MEL=mel, MHL=mhl,
        SEL_CB=sel, MEL_CB=mel, SGL_CB=1.1 * shl, MGL_CB=mgl_cb,
        SEL_CHP=chp_share * sel, MEL_CHP=chp_share * mel, SGL_CHP=1.25 * shl, MGL_CHP=max(1.25 * mhl, mgl_cb),
        SEL_HP=sel + hp_extra * shl, MEL_HP=mel + hp_extra * mhl, SGL_HP=0.0, MGL_HP=0.0,
    )


def single_arc(dem: ArcDemand, physical=None, costs=None, R_e=0.02, R_g=0.05, zeta_g=1500.0,
               length=100.0) -> Instance:
    phys = replace(DEFAULT_PHYSICAL, **(physical or {}))
    cost = replace(DEFAULT_COSTS, **(costs or {}))
    return Instance((0, 1), (Arc(0, 1, length, dem, R_e=R_e, R_g=R_g, zeta_g=zeta_g),), phys, cost)


def electric_case(u_min=360.0) -> Instance:
    """One arc, u_max=400, a_e=1, R_e=1 and a node-1 electric peak of 3900."""
    return single_arc(demand(mel=7800.0), physical={"a_e": 1.0, "u_min": u_min}, R_e=1.0)


def gas_case(p_min=10.0) -> Instance:
    """One arc, a_g=1, R_g=0.1, p_max=60 and a node-1 gas peak of 20."""
    return single_arc(demand(mhl=30.0, gas_peak=40.0),
                      physical={"a_g": 1.0, "p_max": 60.0, "p_min": p_min, "q_max": 100.0}, R_g=0.1)


def uniform(inst: Instance, tech: str | None, x1=0.0, x2=0.0, pipes_everywhere=False) -> PlanDecisions:
    """The same technology and renovation on every heat arc; gas pipes on gas-tech arcs."""
    techs, r1, r2, yg = [], [], [], []
    for a in inst.arcs:
        t = tech if a.demand.has_heat else None
        techs.append(t)
        r1.append(x1 if t else 0.0)
        r2.append(x2 if t else 0.0)
        yg.append(pipes_everywhere or t in ("CB", "CHP"))
    return PlanDecisions(tuple(techs), tuple(r1), tuple(r2), tuple(yg))


def values_of(f: Formulation, assignment: dict) -> np.ndarray:
    """Full vector with the named entries set and every other variable at 0."""
    x = np.zeros(f.n_vars)
    for name, v in assignment.items():
        x[f.catalog[name]] = v
    return x


def row_activity(row, x):
    """Row activity; exact when ``x`` holds Fractions."""
    exact = isinstance(x, list)
    coef = Fraction if exact else float
    act = sum(coef(c) * x[j] for j, c in row.lin)
    act += sum(coef(c) * x[a] * x[b] for c, a, b in row.products)
    return act if exact else float(act)


def row_holds(row, x: np.ndarray, tol=1e-9) -> bool:
    rhs = Fraction(row.rhs) if isinstance(x, list) else row.rhs
    r = row_activity(row, x) - rhs
    if row.sense == "==":
        return abs(r) <= tol
    if row.sense == "<=":
        return r <= tol
    return r >= -tol


def solve_row_for(row, x: np.ndarray, j: int) -> float:
    """Value of linear variable ``j`` that makes equality ``row`` hold, other entries fixed."""
    coef = dict(row.lin)[j]
    rest = row_activity(row, x) - coef * x[j]
    return (row.rhs - rest) / coef
