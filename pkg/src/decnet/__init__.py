"""Design of decentralized energy supply networks: model, relaxation, physics and solver."""

__version__ = "0.1.0"

from .costing import CostBreakdown, cost_breakdown, emission
from .formulation import Formulation, build_formulation, evaluate_residuals, export_json, export_text
from .instance import (
    Instance,
    InstanceError,
    generate_instance,
    load_instance,
    paper_one_arc,
    read_instance,
    save_instance,
    validate_instance,
)
from .lp import LpProblem, LpSolution, solve_lp
from .physics import PlanDecisions, check_feasibility, solve_electric, solve_flows, solve_gas
from .plan import PlanPoint, embed_plan
from .relaxation import mccormick_envelope, relax, relax_quadratic
from .solver import SolveResult, SolverConfig, enumerate_exact, incumbent_from_point, solve

__all__ = [
    "CostBreakdown", "Formulation", "Instance", "InstanceError", "LpProblem", "LpSolution", "PlanDecisions",
    "PlanPoint", "SolveResult", "SolverConfig", "build_formulation", "check_feasibility", "cost_breakdown",
    "embed_plan", "emission", "enumerate_exact", "evaluate_residuals", "export_json", "export_text",
    "generate_instance", "incumbent_from_point", "load_instance", "mccormick_envelope", "paper_one_arc",
    "read_instance", "relax", "relax_quadratic", "save_instance", "solve", "solve_electric", "solve_flows",
    "solve_gas", "solve_lp", "validate_instance",
]
