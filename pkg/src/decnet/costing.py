"""Cost terms and CO2 emission of a concrete plan."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .instance import TECHS, Instance

COST_FIELDS = ("C_energy", "C_tax", "C_allocation", "C_grid", "C_grid_e", "C_tech", "C_renov")


@dataclass(frozen=True)
class CostBreakdown:
    C_energy: float
    C_tax: float
    C_allocation: float
    C_grid: float
    C_grid_e: float | None
    C_tech: float
    C_renov: float
    E_carbon: float
    E_target: float

    @property
    def total(self) -> float:
        return sum(getattr(self, n) or 0.0 for n in COST_FIELDS)

    @property
    def emission_ok(self) -> bool:
        return self.E_carbon <= self.E_target

    def to_dict(self) -> dict:
        out = asdict(self)
        out["total"] = self.total
        return out

    def table(self) -> str:
        rows = [(n, getattr(self, n)) for n in COST_FIELDS if getattr(self, n) is not None]
        rows.append(("total", self.total))
        width = max(len(n) for n, _ in rows)
        lines = [f"{n:<{width}}  {v:>16.4f} EUR/a" for n, v in rows]
        lines.append(f"{'E_carbon':<{width}}  {self.E_carbon:>16.4f} kg/a (target {self.E_target:g})")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _arc_tag(inst: Instance, k: int) -> str:
    a = inst.arcs[k]
    return f"{a.i},{a.j}"


def emission(inst: Instance, plan) -> tuple[float, bool]:
    """Emission of the plan and whether it meets the target (inclusive)."""
    c = inst.costs
    e = c.kappa_e * plan["s0_Esum"] + c.kappa_g * plan["s0_Gsum"]
    return e, e <= c.E_target


def cost_breakdown(inst: Instance, plan) -> CostBreakdown:
    """Evaluate every cost term from the named variables of ``plan`` (PlanPoint or mapping)."""
    c = inst.costs
    s0e, s0g = plan["s0_Esum"], plan["s0_Gsum"]
    c_energy = c.alpha_p_e * s0e + c.alpha_p_g * s0g
    c_tax = c.beta_e * (s0e + c.t_adv * plan["s_chp_Esum"]) + c.beta_g * s0g
    c_alloc = c.alpha_a_e * plan["s0_Emax"] + c.alpha_a_g * plan["s0_Gmax"]
    c_grid = 0.0
    c_grid_e = 0.0 if inst.options.cable_sizing else None
    c_tech = 0.0
    c_renov = 0.0
    for k, a in enumerate(inst.arcs):
        lab = _arc_tag(inst, k)
        if inst.options.pipe_sizing:
            for t in range(len(inst.pipe_catalog.types)):
                y = plan[f"y_gk[{lab};{t}]"] if len(inst.pipe_catalog.types) > 1 else plan[f"y_g[{lab}]"]
                c_grid += inst.pipe_cost(k, t) * y
        else:
            c_grid += inst.pipe_cost(k) * plan[f"y_g[{lab}]"]
        if inst.options.cable_sizing:
            n = len(inst.cable_catalog)
            for t in range(n):
                y = plan[f"y_e[{lab};{t}]"] if n > 1 else 1.0
                c_grid_e += inst.cable_cost(k, t) * y
        for t in TECHS:
            c_tech += c.gamma[t] * plan[f"x_{t}[{lab}]"]
            if a.demand.has_heat:
                c_renov += a.demand.SHL * (c.nu1 * plan[f"x1_{t}[{lab}]"] + c.nu2 * plan[f"x2_{t}[{lab}]"])
    e, _ = emission(inst, plan)
    return CostBreakdown(c_energy, c_tax, c_alloc, c_grid, c_grid_e, c_tech, c_renov, e, c.E_target)
