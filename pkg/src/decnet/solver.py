"""Spatial branch-and-bound over the network design model and an exhaustive oracle.

Nodes are variable boxes. Each box is bounded by the linear relaxation of the
model solved with :func:`decnet.lp.solve_lp`; the bound used for pruning is
the Lagrangian bound of the final duals, which stays valid even when the
simplex stops short of optimality. Incumbents are never taken from LP points:
the point is rounded to decisions, the flows are solved by the physics module,
and only the resulting exact plan is accepted.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .costing import CostBreakdown, cost_breakdown
from .formulation import Formulation, build_formulation, evaluate_residuals
from .instance import GAS_TECHS, TECHS, Instance, InstanceError
from .lp import LpProblem, solve_lp
from .physics import FlowState, PlanDecisions, arc_loads, check_feasibility, node_peaks
from .plan import PlanPoint, decisions_from_point, embed_plan
from .relaxation import DEFAULT_TANGENTS, RelaxationBuilder

# big-M rows amplify fractional binaries (M ~ 1e4), so integrality is judged tightly
INT_TOL = 1e-9
GRID_TOL = 1e-9
# relative McCormick gap below which a product counts as resolved
ENVELOPE_TOL = 1e-9
# below this fraction of its root width a variable is no longer split
MIN_SPLIT_WIDTH = 1e-7
MAX_EXTRA_TANGENTS = 6
ORACLE_GUARD = 10**6

STATUSES = ("optimal", "feasible", "infeasible", "emission-infeasible", "node-limit")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-6
    node_limit: int = 10**6
    time_limit: float | None = None
    # admissible renovation levels; None keeps renovation continuous
    renovation_grid: tuple[float, ...] | None = None
    threads: int = 1
    n_tangents: int = DEFAULT_TANGENTS
    backend: str | None = None

    def to_dict(self) -> dict:
        return {
            "gap_tol": self.gap_tol, "node_limit": self.node_limit, "time_limit": self.time_limit,
            "renovation_grid": list(self.renovation_grid) if self.renovation_grid is not None else None,
            "threads": self.threads, "n_tangents": self.n_tangents, "backend": self.backend,
        }


@dataclass
class BnbNode:
    lb: np.ndarray
    ub: np.ndarray
    bound: float
    depth: int = 0
    history: tuple = ()
    tangents: dict = field(default_factory=dict)


@dataclass
class SolveResult:
    status: str
    objective: float
    lower_bound: float
    gap: float
    nodes: int
    wall_time: float
    incumbent: PlanPoint | None = None
    decisions: PlanDecisions | None = None
    costs: CostBreakdown | None = None
    state: FlowState | None = None
    root_bound: float = -math.inf
    message: str = ""
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def technologies(self) -> tuple | None:
        return None if self.decisions is None else self.decisions.tech

    def to_dict(self, inst: Instance) -> dict:
        def num(v):
            return v if v is None or math.isfinite(v) else str(v)

        doc = {
            "status": self.status,
            "objective": num(self.objective),
            "lower_bound": num(self.lower_bound),
            "root_bound": num(self.root_bound),
            "gap": num(self.gap),
            "nodes": self.nodes,
            "wall_time": self.wall_time,
            "message": self.message,
            "config": self.config,
            "decisions": self.decisions.to_dict(inst) if self.decisions else None,
            "costs": self.costs.to_dict() if self.costs else None,
            "flow_state": self.state.to_dict(inst) if self.state else None,
            "plan": self.incumbent.as_dict() if self.incumbent else None,
        }
        if self.extra:
            doc["extra"] = {k: num(v) if isinstance(v, float) else v for k, v in self.extra.items()}
        return doc


def relative_gap(upper: float, lower: float) -> float:
    if not math.isfinite(upper):
        return math.inf
    diff = max(upper - lower, 0.0)
    if diff == 0.0:
        return 0.0
    return diff / abs(upper) if upper != 0.0 else math.inf


# --------------------------------------------------------------------------- incumbents


def _gas_paths(inst: Instance, needed_nodes, built: set[int]) -> set[int]:
    """Add arcs so every node in ``needed_nodes`` reaches node 0 through built pipes (BFS paths)."""
    adj = [[] for _ in inst.nodes]
    for k, a in enumerate(inst.arcs):
        adj[a.i].append((a.j, k))
        adj[a.j].append((a.i, k))
    parent = {0: None}
    order = [0]
    for v in order:
        # prefer already built arcs so existing pipes get reused
        for w, k in sorted(adj[v], key=lambda t: (t[1] not in built, t[1])):
            if w not in parent:
                parent[w] = (v, k)
                order.append(w)
    out = set(built)
    for v in needed_nodes:
        while parent.get(v) is not None:
            u, k = parent[v]
            out.add(k)
            v = u
    return out


def repair_decisions(inst: Instance, d: PlanDecisions, grid=None, z_on=None) -> PlanDecisions:
    """Snap renovation to ``grid``, enforce the completion rule and gas connectivity."""
    x1, x2 = list(d.x1), list(d.x2)
    for k in range(inst.n_arcs):
        a1, a2 = x1[k], x2[k]
        if grid is not None:
            g = np.asarray(grid)
            a1 = float(g[np.argmin(np.abs(g - a1))])
            a2 = float(g[np.argmin(np.abs(g - a2))])
        a2 = min(a2, a1)
        if a2 > 0.0 and a1 < 1.0:
            if z_on is not None and z_on[k] and (grid is None or 1.0 in grid):
                a1 = 1.0
            else:
                a2 = 0.0
        if d.tech[k] is None:
            a1 = a2 = 0.0
        x1[k], x2[k] = a1, a2
    built = {k for k in range(inst.n_arcs) if d.y_g[k] or d.tech[k] in GAS_TECHS}
    need = set()
    for k in built:
        if d.tech[k] in GAS_TECHS:
            need.update((inst.arcs[k].i, inst.arcs[k].j))
    built = _gas_paths(inst, sorted(need), built)
    yg = tuple(k in built for k in range(inst.n_arcs))
    pipe = d.pipe
    if inst.options.pipe_sizing:
        pipe = tuple((p if p is not None else 0) if yg[k] else None for k, p in enumerate(d.pipe))
    return replace(d, x1=tuple(x1), x2=tuple(x2), y_g=yg, pipe=pipe)


def minimal_pipes(inst: Instance, d: PlanDecisions) -> PlanDecisions:
    """Same decisions with only the pipes needed to feed the gas technologies."""
    need = set()
    for k, t in enumerate(d.tech):
        if t in GAS_TECHS:
            need.update((inst.arcs[k].i, inst.arcs[k].j))
    gas_arcs = {k for k, t in enumerate(d.tech) if t in GAS_TECHS}
    built = _gas_paths(inst, sorted(need), gas_arcs)
    yg = tuple(k in built for k in range(inst.n_arcs))
    pipe = d.pipe
    if inst.options.pipe_sizing:
        pipe = tuple((p if p is not None else 0) if yg[k] else None for k, p in enumerate(d.pipe))
    return replace(d, y_g=yg, pipe=pipe)


@dataclass
class Candidate:
    decisions: PlanDecisions
    plan: PlanPoint
    costs: CostBreakdown
    state: FlowState

    @property
    def objective(self) -> float:
        return self.costs.total


def evaluate_decisions(f: Formulation, d: PlanDecisions, residual_tol: float = 1e-6) -> Candidate | None:
    """Exact plan for ``d`` when physics, residuals and the emission cap all hold."""
    inst = f.instance
    rep = check_feasibility(inst, d)
    if not rep.feasible:
        return None
    plan = embed_plan(f, d, rep.state)
    costs = cost_breakdown(inst, plan)
    if not costs.emission_ok:
        return None
    if not evaluate_residuals(f, plan, residual_tol).ok:
        return None
    return Candidate(d, plan, costs, rep.state)


def incumbent_from_point(inst: Instance, lp_point, f: Formulation | None = None, grid=None,
                         cache: dict | None = None) -> PlanPoint | None:
    """Round an LP point to decisions, solve the physics and return the exact plan (or None)."""
    f = f or build_formulation(inst)
    cand = _round_and_evaluate(f, np.asarray(lp_point, dtype=float)[: f.n_vars], grid, cache)
    return None if cand is None else cand.plan


def _round_and_evaluate(f: Formulation, x: np.ndarray, grid, cache: dict | None) -> Candidate | None:
    inst = f.instance
    raw = decisions_from_point(f, x)
    z_on = []
    for k, v in enumerate(f.layout["arcs"]):
        t = raw.tech[k]
        z_on.append(t is not None and x[v[f"z_{t}"]] >= 0.5)
    first = repair_decisions(inst, raw, grid, z_on)
    best = None
    for d in dict.fromkeys([first, minimal_pipes(inst, first)]):
        if cache is not None and d in cache:
            cand = cache[d]
        else:
            try:
                cand = evaluate_decisions(f, d)
            except InstanceError:
                cand = None
            if cache is not None:
                cache[d] = cand
        if cand is not None and (best is None or cand.objective < best.objective):
            best = cand
    return best


# --------------------------------------------------------------------------- branch and bound


@dataclass
class _Eval:
    status: str
    bound: float
    z: np.ndarray | None


class BranchAndBound:
    def __init__(self, inst: Instance, config: SolverConfig | None = None, f: Formulation | None = None):
        self.inst = inst
        self.config = config or SolverConfig()
        self.f = f or build_formulation(inst)
        self.builder = RelaxationBuilder(self.f)
        self.binary = np.flatnonzero(self.f.catalog.binary_mask())
        self.grid = None
        self.grid_vars = np.zeros(0, dtype=np.int64)
        if self.config.renovation_grid is not None:
            g = sorted(set(float(v) for v in self.config.renovation_grid))
            if not g or g[0] < 0.0 or g[-1] > 1.0:
                raise SolverError("renovation grid must lie in [0, 1]")
            self.grid = np.array(g)
            idx = []
            for v in self.f.layout["arcs"]:
                for t in TECHS:
                    for key in (f"x1_{t}", f"x2_{t}"):
                        if key in v:
                            idx.append(v[key])
            self.grid_vars = np.array(idx, dtype=np.int64)
        self.root_lb = self.f.catalog.lower().astype(float)
        self.root_ub = self.f.catalog.upper().astype(float)
        if self.grid is not None and self.grid_vars.size:
            # the box of a gridded level starts at the outermost admissible points
            self.root_lb[self.grid_vars] = np.maximum(self.root_lb[self.grid_vars], self.grid[0])
            self.root_ub[self.grid_vars] = np.minimum(self.root_ub[self.grid_vars], self.grid[-1])
        root_width = self.root_ub - self.root_lb
        self.root_width = np.where(root_width > 0.0, root_width, 1.0)
        self.cache: dict = {}
        self.best: Candidate | None = None

    # -- bounding
    def evaluate(self, node: BnbNode) -> _Eval:
        rel = self.builder.build(node.lb, node.ub, self.config.n_tangents, node.tangents, with_ids=False)
        sol = solve_lp(rel.to_lp(), backend=self.config.backend)
        if sol.status == "infeasible":
            return _Eval("infeasible", math.inf, None)
        bound = sol.dual_bound + rel.constant
        if sol.status != "optimal":
            # the Lagrangian bound is still valid; never weaker than the parent's
            bound = max(bound, node.bound) if math.isfinite(bound) else node.bound
        return _Eval(sol.status, bound, sol.x)

    # -- incumbents
    def consider(self, z: np.ndarray) -> Candidate | None:
        cand = _round_and_evaluate(self.f, z[: self.f.n_vars], None if self.grid is None else self.grid, self.cache)
        if cand is not None and (self.best is None or cand.objective < self.best.objective - 1e-12):
            self.best = cand
        return cand

    def incumbent_value(self) -> float:
        return self.best.objective if self.best is not None else math.inf

    def prunable(self, bound: float) -> bool:
        inc = self.incumbent_value()
        if not math.isfinite(inc):
            return False
        return bound >= inc - self.config.gap_tol * abs(inc)

    # -- branching
    def _fractional_binary(self, node: BnbNode, z: np.ndarray):
        free = self.binary[node.ub[self.binary] > node.lb[self.binary]]
        if free.size == 0:
            return None
        frac = np.abs(z[free] - np.round(z[free]))
        k = int(np.argmax(frac))
        if frac[k] <= INT_TOL:
            return None
        return int(free[k])

    def _off_grid(self, node: BnbNode, z: np.ndarray):
        if self.grid is None or self.grid_vars.size == 0:
            return None
        vars_ = self.grid_vars[node.ub[self.grid_vars] > node.lb[self.grid_vars]]
        if vars_.size == 0:
            return None
        vals = z[vars_]
        dist = np.min(np.abs(vals[:, None] - self.grid[None, :]), axis=1)
        k = int(np.argmax(dist))
        if dist[k] <= GRID_TOL:
            return None
        return int(vars_[k])

    def envelope_violation(self, node: BnbNode, z: np.ndarray) -> np.ndarray:
        """``|w - x y|`` relative to the root envelope gap of the product (``wx*wy/4`` on the root box).

        Products whose factors have both collapsed below ``MIN_SPLIT_WIDTH`` of their root width
        report zero: splitting them further cannot move the bound.
        """
        b = self.builder
        a, c = b.products[:, 0], b.products[:, 1]
        scale = self.root_width[a] * self.root_width[c] / 4.0
        viol = b.violations(z) / scale
        live = (self._rel_width(node, a) > MIN_SPLIT_WIDTH) | (self._rel_width(node, c) > MIN_SPLIT_WIDTH)
        return np.where(live, viol, 0.0)

    def _rel_width(self, node: BnbNode, j):
        return (node.ub[j] - node.lb[j]) / self.root_width[j]

    def _split_value(self, j: int, node: BnbNode, z: np.ndarray, hint: np.ndarray | None) -> float:
        lo, hi = node.lb[j], node.ub[j]
        w = hi - lo
        if hint is not None and lo + 1e-3 * w < hint[j] < hi - 1e-3 * w:
            return float(hint[j])
        return float(min(max(z[j], lo + 0.1 * w), hi - 0.1 * w))

    def branch(self, node: BnbNode, z: np.ndarray, hint: np.ndarray | None = None, force: bool = False):
        """Two children partitioning ``node``'s box, or None when the LP point is resolved.

        ``force`` splits on any nonzero envelope violation, for nodes whose point looked
        resolved but did not yield an incumbent closing the node.
        """
        j = self._fractional_binary(node, z)
        if j is not None:
            return self._children(node, j, 0.0, 1.0, ("bin", j), z)
        j = self._off_grid(node, z)
        if j is not None:
            g = self.grid
            v = z[j]
            lo_pt = float(g[g < v].max()) if np.any(g < v) else float(g[0])
            hi_pt = float(g[g > v].min()) if np.any(g > v) else float(g[-1])
            return self._children(node, j, lo_pt, hi_pt, ("grid", j), z)
        rel = self.envelope_violation(node, z)
        if rel.size == 0 or rel.max() <= (0.0 if force else ENVELOPE_TOL):
            return None
        k = int(np.argmax(rel))
        a, c = self.builder.products[k]
        cands = [a] if a == c else [a, c]
        widths = [self._rel_width(node, v) for v in cands]
        j = int(cands[int(np.argmax(widths))])
        s = self._split_value(j, node, z, hint)
        return self._children(node, j, s, s, ("split", j, s), z)

    def bisect(self, node: BnbNode):
        """Split the relatively widest product factor at its midpoint; None once all have collapsed."""
        factors = np.unique(self.builder.products)
        if factors.size == 0:
            return None
        widths = self._rel_width(node, factors)
        k = int(np.argmax(widths))
        if widths[k] <= MIN_SPLIT_WIDTH:
            return None
        j = int(factors[k])
        s = 0.5 * (node.lb[j] + node.ub[j])
        return self._children(node, j, s, s, ("bisect", j, s), 0.5 * (node.lb + node.ub))

    def _children(self, node, j, left_ub, right_lb, tag, z):
        tang = dict(node.tangents)
        for k in np.flatnonzero(self.builder.square):
            v = self.builder.products[k, 0]
            pts = list(tang.get(int(k), ()))
            val = float(z[v])
            if val not in pts:
                pts.append(val)
            tang[int(k)] = tuple(pts[-MAX_EXTRA_TANGENTS:])
        lb_a, ub_a = node.lb.copy(), node.ub.copy()
        lb_b, ub_b = node.lb.copy(), node.ub.copy()
        ub_a[j] = left_ub
        lb_b[j] = right_lb
        hist = node.history + (tag,)
        return (BnbNode(lb_a, ub_a, node.bound, node.depth + 1, hist + ("lo",), tang),
                BnbNode(lb_b, ub_b, node.bound, node.depth + 1, hist + ("hi",), tang))

    def _hint(self, node: BnbNode) -> np.ndarray | None:
        if self.best is None:
            return None
        x = self.best.plan.values
        if np.all(x >= node.lb - 1e-9) and np.all(x <= node.ub + 1e-9):
            return x
        return None

    # -- main loop
    def run(self) -> SolveResult:
        cfg = self.config
        t0 = time.perf_counter()
        seq = itertools.count()
        root = BnbNode(self.root_lb.copy(), self.root_ub.copy(), -math.inf)
        heap: list = []
        count = 0
        root_bound = -math.inf
        unresolved = math.inf  # smallest bound among fathomed-but-unresolved nodes
        limit_msg = ""
        pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
        pending = [root]
        try:
            while pending:
                if pool is not None and len(pending) > 1:
                    evals = list(pool.map(self.evaluate, pending))
                else:
                    evals = [self.evaluate(nd) for nd in pending]
                for nd, ev in zip(pending, evals):
                    count += 1
                    if nd.depth == 0:
                        root_bound = ev.bound
                    if ev.status == "infeasible":
                        continue
                    nd.bound = ev.bound
                    z = ev.z
                    cand = self.consider(z) if z is not None else None
                    if self.prunable(nd.bound):
                        continue
                    if z is None:
                        unresolved = min(unresolved, nd.bound)
                        continue
                    kids = self.branch(nd, z, self._hint(nd))
                    closed = cand is not None and relative_gap(cand.objective, nd.bound) <= cfg.gap_tol
                    if kids is None and (ev.status != "optimal" or not closed):
                        # the point is within tolerance yet its exact plan does not close the node
                        # (uncertified LP, or a cap met only up to envelope error): keep shrinking the box
                        kids = self.branch(nd, z, self._hint(nd), force=True) or self.bisect(nd)
                    if kids is None:
                        unresolved = min(unresolved, nd.bound)
                        continue
                    for kid in kids:
                        heapq.heappush(heap, (kid.bound, next(seq), kid))
                pending = []
                # drop nodes the incumbent has made redundant
                while heap and self.prunable(heap[0][0]):
                    heapq.heappop(heap)
                if not heap:
                    break
                if count >= cfg.node_limit:
                    limit_msg = f"node limit {cfg.node_limit} reached"
                    break
                if cfg.time_limit is not None and time.perf_counter() - t0 >= cfg.time_limit:
                    limit_msg = f"time limit {cfg.time_limit:g}s reached"
                    break
                take = max(1, min(cfg.threads, cfg.node_limit - count))
                while heap and len(pending) < take:
                    _, _, nd = heapq.heappop(heap)
                    if not self.prunable(nd.bound):
                        pending.append(nd)
        finally:
            if pool is not None:
                pool.shutdown()
        open_bound = min((b for b, _, _ in heap), default=math.inf)
        inc = self.incumbent_value()
        lower = min([inc, unresolved, open_bound] + [nd.bound for nd in pending])
        wall = time.perf_counter() - t0
        res = SolveResult(
            status="", objective=inc, lower_bound=lower, gap=relative_gap(inc, lower), nodes=count,
            wall_time=wall, root_bound=root_bound, config=cfg.to_dict(),
        )
        if self.best is not None:
            res.incumbent = self.best.plan
            res.decisions = self.best.decisions
            res.costs = self.best.costs
            res.state = self.best.state
        if limit_msg:
            res.status = "node-limit"
            res.message = limit_msg
        elif self.best is None:
            res.lower_bound = math.inf if math.isinf(unresolved) else unresolved
            res.status, res.message = self._classify_infeasible()
        elif res.gap <= cfg.gap_tol:
            res.status = "optimal"
        else:
            res.status = "feasible"
            res.message = "tree exhausted with unresolved nodes; gap reported"
        res.wall_time = time.perf_counter() - t0
        return res

    def _classify_infeasible(self) -> tuple[str, str]:
        """Distinguish an unreachable emission target from other infeasibility."""
        e_min = minimum_emission_relaxed(self.f, self.builder, self.root_lb, self.root_ub, self.config)
        target = self.inst.costs.E_target
        if e_min > target + 1e-9 * max(1.0, abs(target)):
            return "emission-infeasible", (f"no plan can meet E_target={target:g}; "
                                           f"relaxed minimum emission is {e_min:.6g}")
        return "infeasible", "no physically feasible plan found"


def minimum_emission_relaxed(f: Formulation, builder: RelaxationBuilder, lb, ub, config: SolverConfig) -> float:
    """Smallest emission over the relaxation with the emission cap removed."""
    inst = f.instance
    rel = builder.build(lb, ub, config.n_tangents, None, with_ids=True)
    keep = np.array([rid != "carbontar" for rid in rel.row_ids])
    c = np.zeros(rel.n_vars)
    g = f.layout["global"]
    c[g["s0_Esum"]] = inst.costs.kappa_e
    c[g["s0_Gsum"]] = inst.costs.kappa_g
    A = rel.A[keep]
    sol = solve_lp(LpProblem(A, rel.sense[keep], rel.rhs[keep], c, rel.lb, rel.ub), backend=config.backend)
    if sol.status == "infeasible":
        return math.inf
    return float(sol.dual_bound)


def solve(inst: Instance, config: SolverConfig | None = None, **overrides) -> SolveResult:
    """Globally minimise total cost; see :class:`SolverConfig` for limits."""
    cfg = config or SolverConfig()
    if overrides:
        cfg = replace(cfg, **overrides)
    return BranchAndBound(inst, cfg).run()


def branch(solver: BranchAndBound, node: BnbNode, relaxation_point: np.ndarray):
    if solver is None:
        raise SolverError("branch needs a solver context")
    kids = solver.branch(node, np.asarray(relaxation_point, dtype=float))
    if kids is None:
        raise SolverError("node is integral and every product is exact; nothing to branch on")
    return kids


# --------------------------------------------------------------------------- oracle


def renovation_profiles(grid) -> list[tuple[float, float]]:
    """``(x1, x2)`` pairs on the grid with ``x2 <= x1`` and stage two only after a full stage one."""
    g = sorted(set(float(v) for v in grid))
    return [(a, b) for a in g for b in g if b <= a and (b == 0.0 or a == 1.0)]


def _linear_cost(inst: Instance, d: PlanDecisions) -> tuple[float, float]:
    """Cost with zero line losses (a lower bound of the exact cost) and the emission."""
    c = inst.costs
    loads = arc_loads(inst, d)
    peaks = node_peaks(inst, d, loads)
    e = float(loads.s_Esum.sum())
    g = float(loads.s_Gsum.sum())
    cost = (c.alpha_p_e + c.beta_e) * e + (c.alpha_p_g + c.beta_g) * g + c.beta_e * c.t_adv * float(loads.s_chp.sum())
    cost += c.alpha_a_e * peaks.total_E + c.alpha_a_g * peaks.total_G
    for k, a in enumerate(inst.arcs):
        if d.y_g[k]:
            cost += inst.pipe_cost(k, d.pipe_of(k))
        if inst.options.cable_sizing:
            cost += inst.cable_cost(k, d.cable_of(k))
        t = d.tech[k]
        if t is not None:
            cost += c.gamma[t] + a.demand.SHL * (c.nu1 * d.x1[k] + c.nu2 * d.x2[k])
    return cost, c.kappa_e * e + c.kappa_g * g


def oracle_size(inst: Instance, grid) -> int:
    h = len(inst.heat_arcs)
    n_grid = len(set(grid))
    size = 3**h * n_grid ** (2 * h)
    if inst.options.pipe_sizing:
        size *= 2 ** (inst.n_arcs * max(1, len(inst.pipe_catalog.types) - 1))
    if inst.options.cable_sizing:
        size *= len(inst.cable_catalog) ** inst.n_arcs
    return size


def enumerate_exact(inst: Instance, grid=(0.0, 1.0), unique_margin: float = 1e-4) -> SolveResult:
    """Best plan over every technology assignment and gridded renovation profile (trees only).

    Candidates are visited in order of their loss-free cost, a lower bound of
    the exact cost, so physics runs only where it can still matter.
    """
    t0 = time.perf_counter()
    if not inst.is_tree:
        raise SolverError("enumerate_exact is defined on tree instances only")
    size = oracle_size(inst, grid)
    if size > ORACLE_GUARD:
        raise SolverError(f"oracle guard exceeded: {size} candidates > {ORACLE_GUARD}")
    f = build_formulation(inst)
    heat = inst.heat_arcs
    profiles = renovation_profiles(grid)
    m = inst.n_arcs
    cable_opts = [tuple(range(len(inst.cable_catalog)))] * m if inst.options.cable_sizing else None
    n_pipe = len(inst.pipe_catalog.types) if inst.options.pipe_sizing else 0
    cands = []
    for techs in itertools.product(TECHS, repeat=len(heat)):
        tech = [None] * m
        for k, t in zip(heat, techs):
            tech[k] = t
        for prof in itertools.product(profiles, repeat=len(heat)):
            x1 = [0.0] * m
            x2 = [0.0] * m
            for k, (a, b) in zip(heat, prof):
                x1[k], x2[k] = a, b
            base = PlanDecisions(tuple(tech), tuple(x1), tuple(x2), (False,) * m,
                                 (0,) * m if inst.options.cable_sizing else (),
                                 (None,) * m if inst.options.pipe_sizing else ())
            base = minimal_pipes(inst, base)
            built = [k for k in range(m) if base.y_g[k]]
            pipe_choices = itertools.product(range(n_pipe), repeat=len(built)) if n_pipe else [()]
            for pipes in pipe_choices:
                pipe = base.pipe
                if n_pipe:
                    pl = [None] * m
                    for k, p in zip(built, pipes):
                        pl[k] = p
                    pipe = tuple(pl)
                cable_choices = itertools.product(*cable_opts) if cable_opts else [()]
                for cable in cable_choices:
                    d = replace(base, pipe=pipe, cable=tuple(cable) if cable_opts else ())
                    lin, em = _linear_cost(inst, d)
                    if em <= inst.costs.E_target:
                        cands.append((lin, len(cands), d))
    cands.sort(key=lambda t: (t[0], t[1]))
    best: Candidate | None = None
    runner_up = math.inf
    evaluated = 0
    for lin, _, d in cands:
        # exact cost >= loss-free cost, so nothing past the cut can win or tie
        if best is not None and lin > best.objective * (1.0 + unique_margin) + 1e-9:
            break
        evaluated += 1
        cand = evaluate_decisions(f, d)
        if cand is None:
            continue
        if best is None or cand.objective < best.objective:
            if best is not None and best.decisions.tech != cand.decisions.tech:
                runner_up = min(runner_up, best.objective)
            best = cand
        elif cand.decisions.tech != best.decisions.tech:
            runner_up = min(runner_up, cand.objective)
    wall = time.perf_counter() - t0
    extra = {"candidates": len(cands), "evaluated": evaluated, "runner_up": runner_up,
             "grid": [float(v) for v in sorted(set(grid))]}
    if best is None:
        status = "emission-infeasible" if not cands else "infeasible"
        return SolveResult(status, math.inf, math.inf, math.inf, evaluated, wall, extra=extra,
                           message="no admissible candidate")
    extra["unique"] = bool(runner_up > best.objective * (1.0 + unique_margin))
    return SolveResult("optimal", best.objective, best.objective, 0.0, evaluated, wall, best.plan, best.decisions,
                       best.costs, best.state, extra=extra)


def emission_floor(inst: Instance, grid=(0.0, 1.0)) -> float:
    """Smallest emission any plan can reach: per arc the cleanest technology and renovation."""
    c = inst.costs
    mu = max((c.mu1 * a + c.mu2 * b for a, b in renovation_profiles(grid)), default=0.0)
    total = 0.0
    for a in inst.arcs:
        dem = a.demand
        if not dem.has_heat:
            # arcs without heat demand carry no load in the model
            continue
        best = math.inf
        for t in TECHS:
            for red in (1.0, 1.0 - mu):
                e = c.kappa_e * (dem.SEL + (dem.sel(t) - dem.SEL) * red)
                if t in GAS_TECHS:
                    e += c.kappa_g * dem.sgl(t) * red
                best = min(best, e)
        total += best
    return total
