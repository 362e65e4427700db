"""Network instances: data model, validation, JSON I/O and a synthetic generator.

An instance is a directed, connected graph whose arcs are streets carrying an
energy demand, plus the physical and cost parameters of the supply model.
Everything here is immutable once loaded.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

TECHS = ("CB", "CHP", "HP")
GAS_TECHS = ("CB", "CHP")

# Gas properties used for the pipe resistance law.
GAS_DENSITY = 0.7  # kg/m^3
GAS_VELOCITY = 6.0  # m/s
# Pa/(m^3/s)^2 -> mbar/(m^3/h)^2
SI_TO_MODEL_RESISTANCE = 1.0 / (100.0 * 3600.0**2)

DEMAND_FIELDS = (
    "SEL", "SHL", "MEL", "MHL",
    "SEL_CB", "MEL_CB", "SGL_CB", "MGL_CB",
    "SEL_CHP", "MEL_CHP", "SGL_CHP", "MGL_CHP",
    "SEL_HP", "MEL_HP", "SGL_HP", "MGL_HP",
)

# Exact float comparisons on demand data tolerate JSON round-off only.
_DATA_TOL = 1e-9


class InstanceError(ValueError):
    """Raised for malformed instance documents or invalid instance data."""


@dataclass(frozen=True)
class ArcDemand:
    """Yearly (kWh/a) and peak (kW) demand of one arc, per heating technology."""

    SEL: float
    SHL: float
    MEL: float
    MHL: float
    SEL_CB: float
    MEL_CB: float
    SGL_CB: float
    MGL_CB: float
    SEL_CHP: float
    MEL_CHP: float
    SGL_CHP: float
    MGL_CHP: float
    SEL_HP: float
    MEL_HP: float
    SGL_HP: float
    MGL_HP: float

    def sel(self, tech: str) -> float:
        return getattr(self, f"SEL_{tech}")

    def mel(self, tech: str) -> float:
        return getattr(self, f"MEL_{tech}")

    def sgl(self, tech: str) -> float:
        return getattr(self, f"SGL_{tech}")

    def mgl(self, tech: str) -> float:
        return getattr(self, f"MGL_{tech}")

    @property
    def has_heat(self) -> bool:
        return self.SHL > 0.0

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in DEMAND_FIELDS}


@dataclass(frozen=True)
class Arc:
    i: int
    j: int
    length_m: float
    demand: ArcDemand
    R_e: float | None = None
    R_g: float | None = None
    zeta_g: float | None = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.i, self.j)


@dataclass(frozen=True)
class PhysicalParams:
    u_max: float
    u_min: float
    a_e: float
    p_max: float
    p_min: float
    a_g: float
    q_max: float

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))

    @property
    def q_min(self) -> float:
        return -self.q_max

    @property
    def pbar_max(self) -> float:
        return self.p_max - self.p_min

    @property
    def pbar_min(self) -> float:
        return -self.pbar_max

    @property
    def ubar_max(self) -> float:
        return self.u_max - self.u_min

    @property
    def gas_flow_cap(self) -> float:
        """Largest admissible |f_g| in the calorific flow unit."""
        return self.a_g * self.q_max


@dataclass(frozen=True)
class CostParams:
    alpha_p_e: float
    alpha_p_g: float
    beta_e: float
    beta_g: float
    t_adv: float
    alpha_a_e: float
    alpha_a_g: float
    gamma: dict[str, float]
    nu1: float
    nu2: float
    kappa_e: float
    kappa_g: float
    E_target: float
    mu1: float
    mu2: float

    def __post_init__(self):
        for f in fields(self):
            if f.name != "gamma":
                object.__setattr__(self, f.name, float(getattr(self, f.name)))
        object.__setattr__(self, "gamma", {t: float(g) for t, g in self.gamma.items()})

    def scaled(self, factor: float) -> CostParams:
        """Copy with every monetary parameter multiplied by ``factor``."""
        money = ("alpha_p_e", "alpha_p_g", "beta_e", "beta_g", "alpha_a_e", "alpha_a_g", "nu1", "nu2")
        kw = {name: getattr(self, name) * factor for name in money}
        kw["gamma"] = {t: g * factor for t, g in self.gamma.items()}
        return replace(self, **kw)


@dataclass(frozen=True)
class CableType:
    R_per_m: float
    zeta_per_m: float


@dataclass(frozen=True)
class PipeType:
    d_m: float
    zeta_per_m: float


@dataclass(frozen=True)
class PipeCatalog:
    types: tuple[PipeType, ...]
    rho: float = GAS_DENSITY
    v: float = GAS_VELOCITY
    resistance_scale: float = SI_TO_MODEL_RESISTANCE


@dataclass(frozen=True)
class Options:
    cable_sizing: bool = False
    pipe_sizing: bool = False


def darcy_friction(d_m: float, rho: float = GAS_DENSITY, v: float = GAS_VELOCITY) -> float:
    """Blasius-type friction factor ``0.3164 / (v rho d)^0.25``."""
    return 0.3164 / (v * rho * d_m) ** 0.25


def pipe_resistance(d_m: float, length_m: float, rho: float = GAS_DENSITY, v: float = GAS_VELOCITY) -> float:
    """Resistance constant of a pipe of diameter ``d_m`` and length ``length_m``."""
    if d_m <= 0.0:
        raise InstanceError(f"pipe diameter must be positive, got {d_m}")
    lam = darcy_friction(d_m, rho, v)
    return lam * 8.0 * rho * length_m / (math.pi**2 * d_m**5)


@dataclass(frozen=True)
class Instance:
    nodes: tuple[int, ...]
    arcs: tuple[Arc, ...]
    physical: PhysicalParams
    costs: CostParams
    cable_catalog: tuple[CableType, ...] = ()
    pipe_catalog: PipeCatalog | None = None
    options: Options = field(default_factory=Options)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def is_tree(self) -> bool:
        return self.n_arcs == self.n_nodes - 1 and _is_connected(self.nodes, self.arcs)

    @property
    def heat_arcs(self) -> tuple[int, ...]:
        return tuple(k for k, a in enumerate(self.arcs) if a.demand.has_heat)

    def arc_index(self, i: int, j: int) -> int:
        for k, a in enumerate(self.arcs):
            if a.i == i and a.j == j:
                return k
        raise KeyError((i, j))

    def resistance_e(self, k: int, cable: int | None = None) -> float:
        """Electric resistance of arc ``k``; ``cable`` selects a catalog type."""
        arc = self.arcs[k]
        if self.options.cable_sizing:
            if cable is None:
                raise InstanceError("cable sizing is enabled: a cable type is required")
            return self.cable_catalog[cable].R_per_m * arc.length_m
        return float(arc.R_e)

    def resistance_g(self, k: int, pipe: int | None = None) -> float:
        arc = self.arcs[k]
        if self.options.pipe_sizing:
            if pipe is None:
                raise InstanceError("pipe sizing is enabled: a pipe type is required")
            cat = self.pipe_catalog
            return cat.resistance_scale * pipe_resistance(cat.types[pipe].d_m, arc.length_m, cat.rho, cat.v)
        return float(arc.R_g)

    def pipe_cost(self, k: int, pipe: int | None = None) -> float:
        arc = self.arcs[k]
        if self.options.pipe_sizing:
            return self.pipe_catalog.types[pipe].zeta_per_m * arc.length_m
        return float(arc.zeta_g)

    def cable_cost(self, k: int, cable: int) -> float:
        return self.cable_catalog[cable].zeta_per_m * self.arcs[k].length_m

    def incidence(self) -> tuple[list[list[int]], list[list[int]]]:
        """Per node: indices of incoming arcs and of outgoing arcs."""
        inc = [[] for _ in self.nodes]
        out = [[] for _ in self.nodes]
        for k, a in enumerate(self.arcs):
            out[a.i].append(k)
            inc[a.j].append(k)
        return inc, out

    def with_costs(self, **kw) -> Instance:
        return replace(self, costs=replace(self.costs, **kw))

    def with_physical(self, **kw) -> Instance:
        return replace(self, physical=replace(self.physical, **kw))


# --------------------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)

    def __str__(self) -> str:
        if self.ok:
            return "instance valid"
        return "\n".join(self.violations)


def _is_connected(nodes, arcs) -> bool:
    if not nodes:
        return False
    adj = {v: [] for v in nodes}
    for a in arcs:
        if a.i in adj and a.j in adj:
            adj[a.i].append(a.j)
            adj[a.j].append(a.i)
    seen = {nodes[0]}
    todo = deque([nodes[0]])
    while todo:
        v = todo.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return len(seen) == len(nodes)


def _check_demand(rep: ValidationReport, where: str, d: ArcDemand) -> None:
    for name in DEMAND_FIELDS:
        val = getattr(d, name)
        if not math.isfinite(val) or val < 0.0:
            rep.add(f"{where}: {name} must be finite and >= 0 (got {val})")
    if abs(d.SEL_CB - d.SEL) > _DATA_TOL * max(1.0, d.SEL):
        rep.add(f"{where}: SEL_CB must equal SEL")
    if abs(d.MEL_CB - d.MEL) > _DATA_TOL * max(1.0, d.MEL):
        rep.add(f"{where}: MEL_CB must equal MEL")
    for t in GAS_TECHS:
        if d.sgl(t) < d.SHL - _DATA_TOL:
            rep.add(f"{where}: SGL_{t} >= SHL violated")
        if d.mgl(t) < d.MHL - _DATA_TOL:
            rep.add(f"{where}: MGL_{t} >= MHL violated")
    if d.SGL_HP != 0.0:
        rep.add(f"{where}: SGL_HP must be 0")
    if d.MGL_HP != 0.0:
        rep.add(f"{where}: MGL_HP must be 0")
    if d.SEL_HP < d.SEL - _DATA_TOL or d.MEL_HP < d.MEL - _DATA_TOL:
        rep.add(f"{where}: HP consistency violated (SEL_HP >= SEL, MEL_HP >= MEL)")
    if d.SEL_CHP > d.SEL + _DATA_TOL or d.MEL_CHP > d.MEL + _DATA_TOL:
        rep.add(f"{where}: CHP consistency violated (SEL_CHP <= SEL, MEL_CHP <= MEL)")


def validate_instance(inst: Instance) -> ValidationReport:
    """Check graph structure, parameter ranges and demand consistency."""
    rep = ValidationReport()
    nodes = inst.nodes
    if len(set(nodes)) != len(nodes):
        rep.add("duplicate node ids")
    if tuple(sorted(nodes)) != tuple(range(len(nodes))):
        rep.add("nodes must be 0..n")
    if 0 not in nodes:
        rep.add("source node 0 missing")
    node_set = set(nodes)
    seen_arcs = set()
    for k, a in enumerate(inst.arcs):
        where = f"arc ({a.i},{a.j})"
        if a.i == a.j:
            rep.add(f"{where}: self-loop")
        if a.i not in node_set or a.j not in node_set:
            rep.add(f"{where}: unknown endpoint")
        if a.key in seen_arcs:
            rep.add(f"{where}: duplicate arc")
        seen_arcs.add(a.key)
        if not (a.length_m >= 0.0 and math.isfinite(a.length_m)):
            rep.add(f"{where}: length_m must be >= 0")
        _check_demand(rep, where, a.demand)
        if inst.options.cable_sizing:
            if a.R_e is not None:
                rep.add(f"{where}: R_e given while cable sizing derives it from the catalog")
        elif a.R_e is None or not a.R_e > 0.0:
            rep.add(f"{where}: R_e must be given and > 0")
        if inst.options.pipe_sizing:
            if a.R_g is not None or a.zeta_g is not None:
                rep.add(f"{where}: R_g/zeta_g given while pipe sizing derives them from the catalog")
        else:
            if a.R_g is None or not a.R_g > 0.0:
                rep.add(f"{where}: R_g must be given and > 0")
            if a.zeta_g is None or not a.zeta_g >= 0.0:
                rep.add(f"{where}: zeta_g must be given and >= 0")
    if nodes and not _is_connected(nodes, inst.arcs):
        rep.add("graph not connected")

    ph = inst.physical
    if not (ph.u_max > ph.u_min >= 0.0):
        rep.add("u_max > u_min >= 0 violated")
    if not (ph.p_max > ph.p_min >= 0.0):
        rep.add("p_max > p_min >= 0 violated")
    for name in ("a_e", "a_g", "q_max"):
        if not getattr(ph, name) > 0.0:
            rep.add(f"{name} must be > 0")

    c = inst.costs
    if not (c.mu1 > c.mu2):
        rep.add("mu1 > mu2 violated")
    if not (c.mu2 > 0.0):
        rep.add("mu2 > 0 violated")
    if c.mu1 + c.mu2 > 1.0 + _DATA_TOL:
        rep.add("mu1 + mu2 <= 1 violated")
    if not (0.0 < c.t_adv < 1.0):
        rep.add("t_adv must lie in (0, 1)")
    for name in ("alpha_p_e", "alpha_p_g", "beta_e", "beta_g", "alpha_a_e", "alpha_a_g",
                 "nu1", "nu2", "kappa_e", "kappa_g"):
        if not getattr(c, name) >= 0.0:
            rep.add(f"{name} must be >= 0")
    if set(c.gamma) != set(TECHS):
        rep.add("gamma must give a cost for each of CB, CHP, HP")
    elif any(not g >= 0.0 for g in c.gamma.values()):
        rep.add("gamma values must be >= 0")

    if inst.options.cable_sizing:
        if not inst.cable_catalog:
            rep.add("cable sizing enabled but cable catalog is empty")
        for ct in inst.cable_catalog:
            if not (ct.R_per_m > 0.0 and ct.zeta_per_m > 0.0):
                rep.add("cable catalog: resistance and price must be > 0")
    if inst.options.pipe_sizing:
        if inst.pipe_catalog is None or not inst.pipe_catalog.types:
            rep.add("pipe sizing enabled but pipe catalog is empty")
        else:
            for pt in inst.pipe_catalog.types:
                if not (pt.d_m > 0.0 and pt.zeta_per_m > 0.0):
                    rep.add("pipe catalog: diameter and price must be > 0")
            ds = [pt.d_m for pt in inst.pipe_catalog.types]
            if ds != sorted(ds):
                rep.add("pipe catalog: types must be sorted by diameter")
    if inst.cable_catalog:
        rs = [ct.R_per_m for ct in inst.cable_catalog]
        if rs != sorted(rs, reverse=True):
            rep.add("cable catalog: types must be sorted by capacity (decreasing resistance)")
    return rep


# --------------------------------------------------------------------------- JSON I/O

_TOP_KEYS = {"nodes", "arcs", "physical", "costs", "cable_catalog", "pipe_catalog", "options", "meta"}
_ARC_KEYS = {"i", "j", "length_m", "demand", "R_e", "R_g", "zeta_g"}
_PHYS_KEYS = {f.name for f in fields(PhysicalParams)}
_COST_KEYS = {f.name for f in fields(CostParams)}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        raise InstanceError(f"{where}: unknown key(s) {', '.join(extra)}")


def _require(obj: dict, keys, where: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise InstanceError(f"{where}: missing key(s) {', '.join(missing)}")


def _num(obj: dict, key: str, where: str) -> float:
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise InstanceError(f"{where}.{key}: expected a number, got {val!r}")
    return float(val)


def instance_from_dict(doc: dict, validate: bool = True) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "instance")
    _require(doc, ("nodes", "arcs", "physical", "costs"), "instance")

    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in nodes):
        raise InstanceError("nodes: expected a list of integer ids")

    arcs = []
    for idx, a in enumerate(doc["arcs"]):
        where = f"arcs[{idx}]"
        if not isinstance(a, dict):
            raise InstanceError(f"{where}: expected an object")
        _reject_unknown(a, _ARC_KEYS, where)
        _require(a, ("i", "j", "length_m", "demand"), where)
        dem = a["demand"]
        if not isinstance(dem, dict):
            raise InstanceError(f"{where}.demand: expected an object")
        _reject_unknown(dem, set(DEMAND_FIELDS), f"{where}.demand")
        _require(dem, DEMAND_FIELDS, f"{where}.demand")
        demand = ArcDemand(**{name: _num(dem, name, f"{where}.demand") for name in DEMAND_FIELDS})
        opt = {k: _num(a, k, where) for k in ("R_e", "R_g", "zeta_g") if k in a}
        arcs.append(Arc(i=int(a["i"]), j=int(a["j"]), length_m=_num(a, "length_m", where), demand=demand, **opt))

    ph = doc["physical"]
    _reject_unknown(ph, _PHYS_KEYS, "physical")
    _require(ph, sorted(_PHYS_KEYS), "physical")
    physical = PhysicalParams(**{k: _num(ph, k, "physical") for k in _PHYS_KEYS})

    co = doc["costs"]
    _reject_unknown(co, _COST_KEYS, "costs")
    _require(co, sorted(_COST_KEYS), "costs")
    gamma = co["gamma"]
    if not isinstance(gamma, dict):
        raise InstanceError("costs.gamma: expected an object keyed by technology")
    _reject_unknown(gamma, set(TECHS), "costs.gamma")
    _require(gamma, TECHS, "costs.gamma")
    costs = CostParams(
        gamma={t: _num(gamma, t, "costs.gamma") for t in TECHS},
        **{k: _num(co, k, "costs") for k in _COST_KEYS if k != "gamma"},
    )

    cables = []
    for idx, ct in enumerate(doc.get("cable_catalog", [])):
        _reject_unknown(ct, {"R_per_m", "zeta_per_m"}, f"cable_catalog[{idx}]")
        _require(ct, ("R_per_m", "zeta_per_m"), f"cable_catalog[{idx}]")
        cables.append(CableType(_num(ct, "R_per_m", "cable"), _num(ct, "zeta_per_m", "cable")))

    pipe_catalog = None
    if "pipe_catalog" in doc:
        pc = doc["pipe_catalog"]
        _reject_unknown(pc, {"types", "rho", "v", "resistance_scale"}, "pipe_catalog")
        types = []
        for idx, pt in enumerate(pc.get("types", [])):
            _reject_unknown(pt, {"d_m", "zeta_per_m"}, f"pipe_catalog.types[{idx}]")
            _require(pt, ("d_m", "zeta_per_m"), f"pipe_catalog.types[{idx}]")
            types.append(PipeType(_num(pt, "d_m", "pipe"), _num(pt, "zeta_per_m", "pipe")))
        pipe_catalog = PipeCatalog(
            tuple(types),
            rho=_num(pc, "rho", "pipe_catalog") if "rho" in pc else GAS_DENSITY,
            v=_num(pc, "v", "pipe_catalog") if "v" in pc else GAS_VELOCITY,
            resistance_scale=(_num(pc, "resistance_scale", "pipe_catalog")
                              if "resistance_scale" in pc else SI_TO_MODEL_RESISTANCE),
        )

    opts = doc.get("options", {})
    _reject_unknown(opts, {"cable_sizing", "pipe_sizing"}, "options")
    options = Options(bool(opts.get("cable_sizing", False)), bool(opts.get("pipe_sizing", False)))

    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise InstanceError("meta: expected an object")

    inst = Instance(
        nodes=tuple(nodes),
        arcs=tuple(arcs),
        physical=physical,
        costs=costs,
        cable_catalog=tuple(cables),
        pipe_catalog=pipe_catalog,
        options=options,
        meta=dict(meta),
    )
    if validate:
        rep = validate_instance(inst)
        if not rep.ok:
            raise InstanceError("invalid instance: " + "; ".join(rep.violations))
    return inst


def instance_to_dict(inst: Instance) -> dict:
    arcs = []
    for a in inst.arcs:
        d = {"i": a.i, "j": a.j, "length_m": a.length_m, "demand": a.demand.as_dict()}
        for k in ("R_e", "R_g", "zeta_g"):
            if getattr(a, k) is not None:
                d[k] = getattr(a, k)
        arcs.append(d)
    costs = {f.name: getattr(inst.costs, f.name) for f in fields(CostParams)}
    costs["gamma"] = {t: inst.costs.gamma[t] for t in TECHS}
    doc = {
        "nodes": list(inst.nodes),
        "arcs": arcs,
        "physical": {f.name: getattr(inst.physical, f.name) for f in fields(PhysicalParams)},
        "costs": costs,
        "options": {"cable_sizing": inst.options.cable_sizing, "pipe_sizing": inst.options.pipe_sizing},
    }
    if inst.cable_catalog:
        doc["cable_catalog"] = [{"R_per_m": c.R_per_m, "zeta_per_m": c.zeta_per_m} for c in inst.cable_catalog]
    if inst.pipe_catalog is not None:
        doc["pipe_catalog"] = {
            "types": [{"d_m": p.d_m, "zeta_per_m": p.zeta_per_m} for p in inst.pipe_catalog.types],
            "rho": inst.pipe_catalog.rho,
            "v": inst.pipe_catalog.v,
            "resistance_scale": inst.pipe_catalog.resistance_scale,
        }
    if inst.meta:
        doc["meta"] = inst.meta
    return doc


def load_instance(text: str, validate: bool = True) -> Instance:
    """Parse an instance document (JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(doc, validate=validate)


def save_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2, sort_keys=False)


def read_instance(path: str | Path, validate: bool = True) -> Instance:
    return load_instance(Path(path).read_text(encoding="utf-8"), validate=validate)


# --------------------------------------------------------------------------- sample data

# Arc (10,11) demand data (yearly kWh/a, peak kW).
TABLE_DEMAND = ArcDemand(
    SEL=14771.0, SHL=66116.0, MEL=4.6, MHL=47.6,
    SEL_CB=14771.0, MEL_CB=4.6, SGL_CB=73478.0, MGL_CB=52.9,
    SEL_CHP=5573.0, MEL_CHP=4.3, SGL_CHP=83588.0, MGL_CHP=55.8,
    SEL_HP=36836.0, MEL_HP=18.9, SGL_HP=0.0, MGL_HP=0.0,
)

SYNTHETIC_NOTE = (
    "demand data of arc (0,1) is the published arc (10,11) record; all physical and cost "
    "parameters are synthetic placeholders"
)

DEFAULT_PHYSICAL = PhysicalParams(u_max=400.0, u_min=360.0, a_e=3e-3, p_max=50.0, p_min=20.0, a_g=10.0, q_max=40.0)

DEFAULT_COSTS = CostParams(
    alpha_p_e=0.30, alpha_p_g=0.08, beta_e=0.0205, beta_g=0.0055, t_adv=0.5,
    alpha_a_e=60.0, alpha_a_g=12.0,
    gamma={"CB": 900.0, "CHP": 2400.0, "HP": 1800.0},
    nu1=0.025, nu2=0.06, kappa_e=0.4, kappa_g=0.2, E_target=1e12, mu1=0.3, mu2=0.15,
)


def paper_one_arc(**overrides) -> Instance:
    """Two-node, one-arc instance carrying the published arc demand record."""
    phys = replace(DEFAULT_PHYSICAL, **overrides.pop("physical", {}))
    costs = replace(DEFAULT_COSTS, **overrides.pop("costs", {}))
    arc_kw = {"R_e": 0.02, "R_g": 0.05, "zeta_g": 1500.0}
    arc_kw.update(overrides.pop("arc", {}))
    if overrides:
        raise TypeError(f"unexpected overrides {sorted(overrides)}")
    arc = Arc(0, 1, 100.0, TABLE_DEMAND, **arc_kw)
    return Instance(
        nodes=(0, 1), arcs=(arc,), physical=phys, costs=costs,
        meta={"name": "one-arc", "synthetic": SYNTHETIC_NOTE},
    )


# --------------------------------------------------------------------------- generator

TOPOLOGIES = ("tree", "ring", "grid")


def _topology_arcs(n: int, topology: str, rng: np.random.Generator) -> list[tuple[int, int]]:
    if topology == "tree":
        # random recursive tree, arcs point away from the source
        return [(int(rng.integers(0, k)), k) for k in range(1, n)]
    if topology == "ring":
        if n == 2:
            return [(0, 1)]
        return [(k, k + 1) for k in range(n - 1)] + [(0, n - 1)]
    if topology == "grid":
        cols = max(1, int(math.ceil(math.sqrt(n))))
        arcs = []
        for v in range(n):
            r, c = divmod(v, cols)
            if c + 1 < cols and v + 1 < n:
                arcs.append((v, v + 1))
            if v + cols < n:
                arcs.append((v, v + cols))
        return arcs
    raise InstanceError(f"unsupported topology {topology!r} (expected one of {', '.join(TOPOLOGIES)})")


def _random_demand(rng: np.random.Generator, scale: float, heat: bool) -> ArcDemand:
    sel = float(rng.uniform(4000.0, 16000.0)) * scale
    shl = float(rng.uniform(25000.0, 80000.0)) * scale if heat else 0.0
    mel = sel * float(rng.uniform(2.5e-4, 4.0e-4))
    mhl = shl * float(rng.uniform(6.0e-4, 8.0e-4))
    eta_cb = float(rng.uniform(0.85, 0.95))
    eta_chp = float(rng.uniform(0.7, 0.8))
    # electricity produced by the CHP, capped so the net demand stays non-negative
    chp_el = min(float(rng.uniform(0.05, 0.15)) * shl, 0.8 * sel)
    chp_frac = 1.0 - chp_el / sel
    cop = float(rng.uniform(2.5, 4.0))
    r = lambda v: round(v, 6)  # noqa: E731 - keep JSON short and exact
    sel, shl, mel, mhl = r(sel), r(shl), r(mel), r(mhl)
    return ArcDemand(
        SEL=sel, SHL=shl, MEL=mel, MHL=mhl,
        SEL_CB=sel, MEL_CB=mel, SGL_CB=r(shl / eta_cb), MGL_CB=r(mhl / eta_cb),
        SEL_CHP=r(sel * chp_frac), MEL_CHP=r(mel * chp_frac),
        SGL_CHP=r(max(shl / eta_chp, shl / eta_cb)), MGL_CHP=r(max(mhl / eta_chp, mhl / eta_cb)),
        SEL_HP=r(sel + shl / cop), MEL_HP=r(mel + mhl / cop), SGL_HP=0.0, MGL_HP=0.0,
    )


def generate_instance(
    n: int,
    topology: str = "tree",
    seed: int = 0,
    demand_scale: float = 1.0,
    heat_fraction: float = 1.0,
    cable_sizing: bool = False,
    pipe_sizing: bool = False,
) -> Instance:
    """Random synthetic instance with ``n`` nodes; deterministic for a fixed seed.

    Prices are jittered around the defaults so that different seeds favour
    different technologies. ``heat_fraction`` is the probability that an arc
    has a heat demand.
    """
    if n < 2:
        raise InstanceError("generate_instance needs n >= 2")
    if topology not in TOPOLOGIES:
        raise InstanceError(f"unsupported topology {topology!r} (expected one of {', '.join(TOPOLOGIES)})")
    rng = np.random.default_rng(seed)
    pairs = _topology_arcs(n, topology, rng)
    # larger networks carry more flow on their trunk arcs
    size = max(1.0, (n - 1) / 4.0)
    arcs = []
    for i, j in pairs:
        length = round(float(rng.uniform(40.0, 200.0)), 3)
        heat = bool(rng.random() < heat_fraction)
        demand = _random_demand(rng, demand_scale, heat)
        kw = {}
        if not cable_sizing:
            kw["R_e"] = round(length * float(rng.uniform(1.5e-4, 3.0e-4)) / size, 9)
        if not pipe_sizing:
            kw["R_g"] = round(length * float(rng.uniform(2e-4, 6e-4)) / size**2, 9)
            kw["zeta_g"] = round(length * float(rng.uniform(8.0, 20.0)), 4)
        arcs.append(Arc(i, j, length, demand, **kw))

    jitter = lambda v, w=0.25: round(v * float(rng.uniform(1.0 - w, 1.0 + w)), 6)  # noqa: E731
    base = DEFAULT_COSTS
    costs = replace(
        base,
        alpha_p_e=jitter(base.alpha_p_e), alpha_p_g=jitter(base.alpha_p_g, 0.4),
        alpha_a_e=jitter(base.alpha_a_e), alpha_a_g=jitter(base.alpha_a_g),
        gamma={t: jitter(g, 0.4) for t, g in base.gamma.items()},
        nu1=jitter(base.nu1, 0.4), nu2=jitter(base.nu2, 0.3),
    )
    cables = ()
    if cable_sizing:
        cables = (CableType(3.0e-4, 20.0), CableType(2.0e-4, 28.0), CableType(1.2e-4, 40.0))
    pipes = None
    if pipe_sizing:
        pipes = PipeCatalog((PipeType(0.05, 9.0), PipeType(0.08, 13.0), PipeType(0.12, 19.0)))
    return Instance(
        nodes=tuple(range(n)),
        arcs=tuple(arcs),
        physical=replace(DEFAULT_PHYSICAL, q_max=DEFAULT_PHYSICAL.q_max * size),
        costs=costs,
        cable_catalog=cables,
        pipe_catalog=pipes,
        options=Options(cable_sizing, pipe_sizing),
        meta={
            "generator": {"n": n, "topology": topology, "seed": seed, "demand_scale": demand_scale,
                          "heat_fraction": heat_fraction},
            "synthetic": "all demand, physical and cost values are synthetic",
        },
    )
