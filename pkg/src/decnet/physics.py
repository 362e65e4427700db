"""Steady-state electric and gas flow for a fixed plan.

Both networks are solved by safeguarded Newton iterations from a flat start
(every node at the source potential/pressure), which picks the
high-potential root of the Ohmic system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import GAS_TECHS, TECHS, Instance, InstanceError

TOL_PHYS = 1e-8
MAX_NEWTON = 100
GAS_EPS = 1e-12
_MAX_HALVINGS = 40


class DecisionError(InstanceError):
    """Plan decisions that violate the structural rules of the model."""


@dataclass(frozen=True)
class PlanDecisions:
    """Discrete choices and renovation levels, one entry per arc (arc order of the instance)."""

    tech: tuple[str | None, ...]
    x1: tuple[float, ...]
    x2: tuple[float, ...]
    y_g: tuple[bool, ...]
    cable: tuple[int | None, ...] = ()
    pipe: tuple[int | None, ...] = ()

    def cable_of(self, k: int) -> int | None:
        return self.cable[k] if self.cable else None

    def pipe_of(self, k: int) -> int | None:
        return self.pipe[k] if self.pipe else None

    def to_dict(self, inst: Instance) -> dict:
        arcs = []
        for k, a in enumerate(inst.arcs):
            rec = {"i": a.i, "j": a.j, "tech": self.tech[k], "x1": self.x1[k], "x2": self.x2[k],
                   "y_g": bool(self.y_g[k])}
            if self.cable:
                rec["cable"] = self.cable[k]
            if self.pipe:
                rec["pipe"] = self.pipe[k]
            arcs.append(rec)
        return {"arcs": arcs}

    @staticmethod
    def from_dict(inst: Instance, doc: dict) -> PlanDecisions:
        recs = doc.get("arcs")
        if not isinstance(recs, list):
            raise DecisionError("decisions document needs an 'arcs' list")
        by_key = {}
        for rec in recs:
            unknown = set(rec) - {"i", "j", "tech", "x1", "x2", "y_g", "cable", "pipe"}
            if unknown:
                raise DecisionError(f"unknown decision keys {sorted(unknown)}")
            by_key[(rec["i"], rec["j"])] = rec
        tech, x1, x2, yg, cable, pipe = [], [], [], [], [], []
        for a in inst.arcs:
            rec = by_key.get(a.key)
            if rec is None:
                raise DecisionError(f"no decision for arc ({a.i},{a.j})")
            tech.append(rec.get("tech"))
            x1.append(float(rec.get("x1", 0.0)))
            x2.append(float(rec.get("x2", 0.0)))
            yg.append(bool(rec.get("y_g", False)))
            cable.append(rec.get("cable"))
            pipe.append(rec.get("pipe"))
        return PlanDecisions(
            tuple(tech), tuple(x1), tuple(x2), tuple(yg),
            tuple(cable) if inst.options.cable_sizing else (),
            tuple(pipe) if inst.options.pipe_sizing else (),
        )


def decisions_problems(inst: Instance, d: PlanDecisions) -> list[str]:
    """Structural rule violations of a decision set (empty when admissible)."""
    out = []
    n = inst.n_arcs
    if not (len(d.tech) == len(d.x1) == len(d.x2) == len(d.y_g) == n):
        return [f"decisions cover {len(d.tech)} arcs, instance has {n}"]
    for k, a in enumerate(inst.arcs):
        lab = f"({a.i},{a.j})"
        t = d.tech[k]
        if a.demand.has_heat:
            if t not in TECHS:
                out.append(f"arc {lab}: exactly one technology required, got {t!r}")
        elif t is not None:
            out.append(f"arc {lab}: no heat demand, technology must be none")
        x1, x2 = d.x1[k], d.x2[k]
        if not (0.0 <= x2 <= x1 <= 1.0):
            out.append(f"arc {lab}: renovation levels must satisfy 0 <= x2 <= x1 <= 1")
        elif x2 > 0.0 and x1 < 1.0:
            out.append(f"arc {lab}: second renovation stage requires a completed first stage")
        if t is None and (x1 > 0.0 or x2 > 0.0):
            out.append(f"arc {lab}: renovation without a technology")
        if t in GAS_TECHS and not d.y_g[k]:
            out.append(f"arc {lab}: pipe linkage violated, {t} needs a gas pipe")
        if inst.options.cable_sizing:
            c = d.cable_of(k)
            if c is None or not 0 <= c < len(inst.cable_catalog):
                out.append(f"arc {lab}: cable type required")
        if inst.options.pipe_sizing and d.y_g[k]:
            p = d.pipe_of(k)
            if p is None or not 0 <= p < len(inst.pipe_catalog.types):
                out.append(f"arc {lab}: pipe type required for a built pipe")
    return out


@dataclass
class ArcLoads:
    """Renovation-reduced demand per arc; technology-indexed arrays have TECHS order in axis 1."""

    s_Esum_t: np.ndarray
    s_Emax_t: np.ndarray
    s_Gsum: np.ndarray
    s_Gmax: np.ndarray
    s_chp: np.ndarray

    @property
    def s_Esum(self) -> np.ndarray:
        return self.s_Esum_t.sum(axis=1)

    @property
    def s_Emax(self) -> np.ndarray:
        return self.s_Emax_t.sum(axis=1)


def arc_loads(inst: Instance, d: PlanDecisions) -> ArcLoads:
    c = inst.costs
    m = inst.n_arcs
    e_sum = np.zeros((m, 3))
    e_max = np.zeros((m, 3))
    g_sum = np.zeros(m)
    g_max = np.zeros(m)
    chp = np.zeros(m)
    for k, a in enumerate(inst.arcs):
        t = d.tech[k]
        if t is None:
            continue
        dem = a.demand
        ti = TECHS.index(t)
        red = 1.0 - c.mu1 * d.x1[k] - c.mu2 * d.x2[k]
        e_sum[k, ti] = dem.SEL + (dem.sel(t) - dem.SEL) * red
        e_max[k, ti] = dem.MEL + (dem.mel(t) - dem.MEL) * red
        if t in GAS_TECHS:
            g_sum[k] = dem.sgl(t) * red
            g_max[k] = dem.mgl(t) * red
        if t == "CHP":
            chp[k] = (dem.SEL - dem.SEL_CHP) * red
    return ArcLoads(e_sum, e_max, g_sum, g_max, chp)


@dataclass
class NodePeaks:
    sbar_E: np.ndarray
    sbar_G: np.ndarray

    @property
    def total_E(self) -> float:
        return float(self.sbar_E.sum())

    @property
    def total_G(self) -> float:
        return float(self.sbar_G.sum())


def node_peaks(inst: Instance, d: PlanDecisions, loads: ArcLoads | None = None) -> NodePeaks:
    """Arc peaks split half/half onto both end nodes."""
    loads = loads or arc_loads(inst, d)
    e = np.zeros(inst.n_nodes)
    g = np.zeros(inst.n_nodes)
    emax = loads.s_Emax
    for k, a in enumerate(inst.arcs):
        for v in (a.i, a.j):
            e[v] += 0.5 * emax[k]
            g[v] += 0.5 * loads.s_Gmax[k]
    return NodePeaks(e, g)


@dataclass
class FlowState:
    u: np.ndarray
    p: np.ndarray
    f_e_in: np.ndarray
    f_e_out: np.ndarray
    f_g: np.ndarray
    q_bar: np.ndarray
    residual_e: float
    residual_g: float
    newton_iterations: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.converged.values()) if self.converged else False

    def u_bar(self, inst: Instance) -> np.ndarray:
        return np.array([self.u[a.i] - self.u[a.j] for a in inst.arcs])

    def p_bar(self, inst: Instance) -> np.ndarray:
        return np.array([self.p[a.i] - self.p[a.j] for a in inst.arcs])

    def to_dict(self, inst: Instance) -> dict:
        return {
            "u": self.u.tolist(),
            "p": self.p.tolist(),
            "arcs": [
                {"i": a.i, "j": a.j, "f_e_in": float(self.f_e_in[k]), "f_e_out": float(self.f_e_out[k]),
                 "f_g": float(self.f_g[k]), "q_bar": float(self.q_bar[k])}
                for k, a in enumerate(inst.arcs)
            ],
            "residual_e": self.residual_e,
            "residual_g": self.residual_g,
            "newton_iterations": self.newton_iterations,
            "converged": self.converged,
            "messages": self.messages,
        }


def _newton(residual, jacobian, x0, tol, max_iter):
    """Damped Newton; returns (x, residual_norm, iterations, converged, message)."""
    x = x0.copy()
    r = residual(x)
    norm = float(np.max(np.abs(r))) if r.size else 0.0
    for it in range(max_iter + 1):
        if norm <= tol:
            return x, norm, it, True, ""
        if it == max_iter:
            break
        J = jacobian(x)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return x, norm, it, False, "singular Jacobian"
        if not np.all(np.isfinite(step)):
            return x, norm, it, False, "singular Jacobian"
        t = 1.0
        for _ in range(_MAX_HALVINGS):
            x_new = x + t * step
            r_new = residual(x_new)
            new_norm = float(np.max(np.abs(r_new)))
            if new_norm < norm:
                break
            t *= 0.5
        else:
            return x, norm, it, False, "no residual decrease along the Newton direction"
        x, r, norm = x_new, r_new, new_norm
    return x, norm, max_iter, False, f"no convergence in {max_iter} iterations"


def _arc_arrays(inst: Instance):
    tail = np.array([a.i for a in inst.arcs], dtype=np.int64)
    head = np.array([a.j for a in inst.arcs], dtype=np.int64)
    return tail, head


def electric_resistances(inst: Instance, d: PlanDecisions) -> np.ndarray:
    return np.array([inst.resistance_e(k, d.cable_of(k)) for k in range(inst.n_arcs)])


def solve_electric(inst: Instance, d: PlanDecisions, peaks: NodePeaks | None = None,
                   tol: float = TOL_PHYS, max_iter: int = MAX_NEWTON) -> FlowState:
    """Potentials and flows of the electric network; node 0 held at u_max."""
    ph = inst.physical
    peaks = peaks or node_peaks(inst, d)
    n = inst.n_nodes
    tail, head = _arc_arrays(inst)
    g = ph.a_e / electric_resistances(inst, d)
    demand = peaks.sbar_E[1:]

    def full(v):
        u = np.empty(n)
        u[0] = ph.u_max
        u[1:] = v
        return u

    def residual(v):
        u = full(v)
        ub = u[tail] - u[head]
        f_in = g * u[head] * ub
        f_out = g * u[tail] * ub
        bal = np.zeros(n)
        np.add.at(bal, head, f_in)
        np.add.at(bal, tail, -f_out)
        return bal[1:] - demand

    def jacobian(v):
        u = full(v)
        ui, uj = u[tail], u[head]
        J = np.zeros((n, n))
        # node head receives f_in = g uj (ui - uj)
        np.add.at(J, (head, tail), g * uj)
        np.add.at(J, (head, head), g * (ui - 2.0 * uj))
        # node tail loses f_out = g ui (ui - uj)
        np.add.at(J, (tail, tail), -g * (2.0 * ui - uj))
        np.add.at(J, (tail, head), g * ui)
        return J[1:, 1:]

    v, norm, its, ok, msg = _newton(residual, jacobian, np.full(n - 1, ph.u_max), tol, max_iter)
    u = full(v)
    ub = u[tail] - u[head]
    state = FlowState(
        u=u, p=np.full(n, ph.p_max), f_e_in=g * u[head] * ub, f_e_out=g * u[tail] * ub,
        f_g=np.zeros(inst.n_arcs), q_bar=np.zeros(inst.n_arcs), residual_e=norm, residual_g=0.0,
        newton_iterations={"electric": its}, converged={"electric": ok},
    )
    if not ok:
        state.messages.append(f"electric infeasibility: {msg}")
    return state


def gas_resistances(inst: Instance, d: PlanDecisions) -> np.ndarray:
    out = np.zeros(inst.n_arcs)
    for k in range(inst.n_arcs):
        if d.y_g[k]:
            out[k] = inst.resistance_g(k, d.pipe_of(k))
    return out


def gas_component(inst: Instance, d: PlanDecisions) -> np.ndarray:
    """Mask of nodes connected to the source through built pipes."""
    adj = [[] for _ in inst.nodes]
    for k, a in enumerate(inst.arcs):
        if d.y_g[k]:
            adj[a.i].append(a.j)
            adj[a.j].append(a.i)
    seen = np.zeros(inst.n_nodes, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return seen


def solve_gas(inst: Instance, d: PlanDecisions, peaks: NodePeaks | None = None,
              tol: float = TOL_PHYS, max_iter: int = MAX_NEWTON) -> FlowState:
    """Pressures and flows of the gas network; nodes off the built pipe network stay at p_max."""
    ph = inst.physical
    peaks = peaks or node_peaks(inst, d)
    n = inst.n_nodes
    comp = gas_component(inst, d)
    stranded = [i for i in range(n) if peaks.sbar_G[i] > 0.0 and not comp[i]]
    if stranded:
        raise InstanceError(f"gas demand at node(s) {stranded} is not connected to the source by built pipes")
    built = np.flatnonzero(np.asarray(d.y_g, dtype=bool))
    tail, head = _arc_arrays(inst)
    tail, head = tail[built], head[built]
    c = ph.a_g / np.sqrt(gas_resistances(inst, d)[built])
    unknown = np.flatnonzero(comp)[1:]
    pos = np.full(n, -1)
    pos[unknown] = np.arange(unknown.size)
    demand = peaks.sbar_G[unknown]

    def full(v):
        p = np.full(n, ph.p_max)
        p[unknown] = v
        return p

    def flows(v, eps):
        p = full(v)
        pb = p[tail] - p[head]
        mag = np.sqrt(np.abs(pb) + eps) - math.sqrt(eps)
        return np.sign(pb) * c * mag

    def slope(v, eps):
        p = full(v)
        return 0.5 * c / np.sqrt(np.abs(p[tail] - p[head]) + eps)

    def make(eps):
        def residual(v):
            f = flows(v, eps)
            bal = np.zeros(n)
            np.add.at(bal, head, f)
            np.add.at(bal, tail, -f)
            return bal[unknown] - demand

        def jacobian(v):
            dfd = slope(v, max(eps, GAS_EPS))
            J = np.zeros((n, n))
            # f depends on p_tail - p_head with slope dfd
            np.add.at(J, (head, tail), dfd)
            np.add.at(J, (head, head), -dfd)
            np.add.at(J, (tail, tail), -dfd)
            np.add.at(J, (tail, head), dfd)
            return J[np.ix_(unknown, unknown)]

        return residual, jacobian

    its_total = 0
    v0 = np.full(unknown.size, ph.p_max)
    res_r, jac_r = make(GAS_EPS)
    v, norm, its, ok, msg = _newton(res_r, jac_r, v0, tol, max_iter)
    its_total += its
    # polish against the exact square-root law (regularisation shifts flows by ~sqrt(eps))
    res_x, jac_x = make(0.0)
    if ok:
        v, norm, its, ok, msg = _newton(res_x, jac_x, v, tol, max_iter)
        its_total += its
    p = full(v)
    f_all = np.zeros(inst.n_arcs)
    f_b = flows(v, 0.0)
    f_all[built] = f_b
    state = FlowState(
        u=np.full(n, ph.u_max), p=p, f_e_in=np.zeros(inst.n_arcs), f_e_out=np.zeros(inst.n_arcs),
        f_g=f_all, q_bar=f_all / ph.a_g, residual_e=0.0, residual_g=norm,
        newton_iterations={"gas": its_total}, converged={"gas": ok},
    )
    if not ok:
        state.messages.append(f"gas infeasibility: {msg}")
    return state


def solve_flows(inst: Instance, d: PlanDecisions, tol: float = TOL_PHYS) -> FlowState:
    peaks = node_peaks(inst, d)
    el = solve_electric(inst, d, peaks, tol)
    gas = solve_gas(inst, d, peaks, tol)
    return FlowState(
        u=el.u, p=gas.p, f_e_in=el.f_e_in, f_e_out=el.f_e_out, f_g=gas.f_g, q_bar=gas.q_bar,
        residual_e=el.residual_e, residual_g=gas.residual_g,
        newton_iterations={**el.newton_iterations, **gas.newton_iterations},
        converged={**el.converged, **gas.converged}, messages=el.messages + gas.messages,
    )


@dataclass
class FeasibilityReport:
    feasible: bool
    violations: list[str]
    state: FlowState | None
    loads: ArcLoads | None = None
    peaks: NodePeaks | None = None

    def __str__(self) -> str:
        return "feasible" if self.feasible else "; ".join(self.violations)


def check_feasibility(inst: Instance, d: PlanDecisions, tol: float = TOL_PHYS) -> FeasibilityReport:
    """Structural rules, both flow solves, then potential/pressure/flow bounds."""
    problems = decisions_problems(inst, d)
    if problems:
        return FeasibilityReport(False, problems, None)
    loads = arc_loads(inst, d)
    peaks = node_peaks(inst, d, loads)
    try:
        el = solve_electric(inst, d, peaks, tol)
        gas = solve_gas(inst, d, peaks, tol)
    except InstanceError as exc:
        return FeasibilityReport(False, [f"gas: {exc}"], None, loads, peaks)
    state = FlowState(
        u=el.u, p=gas.p, f_e_in=el.f_e_in, f_e_out=el.f_e_out, f_g=gas.f_g, q_bar=gas.q_bar,
        residual_e=el.residual_e, residual_g=gas.residual_g,
        newton_iterations={**el.newton_iterations, **gas.newton_iterations},
        converged={**el.converged, **gas.converged}, messages=el.messages + gas.messages,
    )
    out = list(state.messages)
    ph = inst.physical
    slack = 1e-9
    if state.converged.get("electric"):
        for i in inst.nodes:
            if state.u[i] < ph.u_min - slack:
                out.append(f"node {i}: potential {state.u[i]:.6g} below u_min {ph.u_min:g}")
            if state.u[i] > ph.u_max + slack:
                out.append(f"node {i}: potential {state.u[i]:.6g} above u_max {ph.u_max:g}")
    if state.converged.get("gas"):
        for i in inst.nodes:
            if state.p[i] < ph.p_min - slack:
                out.append(f"node {i}: pressure {state.p[i]:.6g} below p_min {ph.p_min:g}")
        for k, a in enumerate(inst.arcs):
            if abs(state.q_bar[k]) > ph.q_max + slack:
                out.append(f"arc ({a.i},{a.j}): gas flow {state.q_bar[k]:.6g} exceeds q_max {ph.q_max:g}")
    return FeasibilityReport(not out, out, state, loads, peaks)
