"""Command-line entry point: ``decnet <subcommand> ...``.

Exit codes: 0 success or feasible, 1 invalid input, 2 infeasible model,
3 resource limit reached.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .costing import CostBreakdown
from .formulation import build_formulation, evaluate_residuals, export_json, export_text
from .instance import (
    TOPOLOGIES,
    InstanceError,
    Options,
    generate_instance,
    instance_to_dict,
    read_instance,
    validate_instance,
)
from .physics import PlanDecisions, check_feasibility, decisions_problems
from .plan import embed_plan
from .solver import SolverConfig, SolverError, enumerate_exact, solve

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3
_STATUS_EXIT = {
    "optimal": EXIT_OK,
    "feasible": EXIT_OK,
    "infeasible": EXIT_INFEASIBLE,
    "emission-infeasible": EXIT_INFEASIBLE,
    "node-limit": EXIT_LIMIT,
}


@dataclass
class CliConfig:
    subcommand: str
    inputs: list[str] = field(default_factory=list)
    output: str | None = None
    solver: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    verbosity: int = 0
    threads: int = 1
    seed: int | None = None

    def echo(self) -> dict:
        return {"decnet_version": __version__, "subcommand": self.subcommand, "inputs": self.inputs,
                "seed": self.seed, "threads": self.threads, "solver": self.solver, "options": self.options}


class UsageError(Exception):
    pass


def _grid(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers, got {text!r}") from exc
    if not vals or any(not 0.0 <= v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError("grid values must lie in [0, 1]")
    return vals


def _toggle(text: str) -> bool:
    if text in ("on", "true", "1", "yes"):
        return True
    if text in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decnet", description="Decentralized energy supply network design.")
    p.add_argument("--version", action="version", version=f"decnet {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, inputs=1):
        sp.add_argument("-o", "--output", help="write the JSON document here")
        sp.add_argument("--json", action="store_true", help="print JSON instead of the text report")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        sp.add_argument("--seed", type=int, default=None, help="echoed into the output for bookkeeping")

    sp = sub.add_parser("validate", help="check an instance document")
    sp.add_argument("instance")
    common(sp)

    sp = sub.add_parser("gen", help="generate a synthetic instance")
    sp.add_argument("--n", type=int, required=True, help="number of nodes")
    sp.add_argument("--topology", choices=TOPOLOGIES, default="tree")
    sp.add_argument("--demand-scale", type=float, default=1.0)
    sp.add_argument("--heat-fraction", type=float, default=1.0)
    sp.add_argument("--cable-sizing", action="store_true")
    sp.add_argument("--pipe-sizing", action="store_true")
    common(sp)

    sp = sub.add_parser("formulate", help="export the algebraic model")
    sp.add_argument("instance")
    sp.add_argument("--format", choices=("text", "json"), default="text")
    common(sp)

    def solver_flags(sp):
        sp.add_argument("--gap", type=float, default=1e-6, help="relative optimality gap")
        sp.add_argument("--node-limit", type=int, default=10**6)
        sp.add_argument("--time-limit", type=float, default=None, help="seconds")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--renovation-grid", type=_grid, default=None,
                        help="restrict renovation levels, e.g. 0,1 or 0,0.5,1")
        sp.add_argument("--tangents", type=int, default=3)
        sp.add_argument("--cable-sizing", type=_toggle, default=None, help="on/off, overrides the instance")
        sp.add_argument("--pipe-sizing", type=_toggle, default=None, help="on/off, overrides the instance")
        sp.add_argument("--plan", help="also write the decisions document here")

    sp = sub.add_parser("solve", help="branch-and-bound optimisation")
    sp.add_argument("instance")
    solver_flags(sp)
    common(sp)

    sp = sub.add_parser("simulate", help="flow physics for fixed decisions")
    sp.add_argument("instance")
    sp.add_argument("decisions", help="decisions document or a solve result")
    common(sp)

    sp = sub.add_parser("oracle", help="exhaustive enumeration on small trees")
    sp.add_argument("instance")
    sp.add_argument("--grid", type=_grid, default=(0.0, 1.0))
    sp.add_argument("--plan", help="also write the decisions document here")
    common(sp)

    sp = sub.add_parser("report", help="render a solve result as text")
    sp.add_argument("result")
    sp.add_argument("--instance", help="instance document, for arc details")
    common(sp)
    return p


# --------------------------------------------------------------------------- rendering


def _fmt_num(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return f"{v:.6g}" if math.isfinite(v) else str(v)


def plan_report(doc: dict) -> str:
    """Human text for a SolveResult document."""
    lines = [f"status      {doc['status']}"]
    for key in ("objective", "lower_bound", "gap", "nodes", "wall_time"):
        if key in doc:
            lines.append(f"{key:<11} {_fmt_num(doc[key])}")
    if doc.get("message"):
        lines.append(f"message     {doc['message']}")
    dec = doc.get("decisions")
    if dec:
        lines.append("")
        lines.append(f"{'arc':<10} {'tech':<5} {'reno1':>6} {'reno2':>6} {'pipe':>5}")
        for a in dec["arcs"]:
            pipe = "yes" if a["y_g"] else "no"
            if a.get("pipe") is not None and a["y_g"]:
                pipe = f"#{a['pipe']}"
            lines.append(f"({a['i']},{a['j']})".ljust(10) + f" {str(a['tech'] or '-'):<5} "
                         f"{100 * a['x1']:>5.0f}% {100 * a['x2']:>5.0f}% {pipe:>5}")
    costs = doc.get("costs")
    if costs:
        cb = CostBreakdown(**{k: costs[k] for k in CostBreakdown.__dataclass_fields__})
        lines.append("")
        lines.append(cb.table())
        lines.append(f"emission {'within' if cb.emission_ok else 'above'} target")
    return "\n".join(lines)


def flow_report(doc: dict) -> str:
    lines = [f"feasible    {doc['feasible']}"]
    for v in doc.get("violations", []):
        lines.append(f"  violation: {v}")
    st = doc.get("flow_state")
    if st:
        lines.append(f"{'node':<6} {'u':>12} {'p':>10}")
        for i, (u, p) in enumerate(zip(st["u"], st["p"])):
            lines.append(f"{i:<6} {u:>12.6f} {p:>10.6f}")
        lines.append(f"{'arc':<10} {'f_e_in':>12} {'f_e_out':>12} {'f_g':>12}")
        for a in st["arcs"]:
            lines.append(f"({a['i']},{a['j']})".ljust(10) + f" {a['f_e_in']:>12.6f} {a['f_e_out']:>12.6f} "
                         f"{a['f_g']:>12.6f}")
        lines.append(f"residual e {st['residual_e']:.3g}, g {st['residual_g']:.3g}")
    if "plan_max_residual" in doc:
        lines.append(f"model residual of embedded plan {doc['plan_max_residual']:.3g}")
    return "\n".join(lines)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _emit(args, cfg: CliConfig, doc: dict, text: str) -> None:
    doc = _json_safe({**doc, "meta": cfg.echo()})
    payload = json.dumps(doc, indent=1, sort_keys=False)
    if args.output:
        Path(args.output).write_text(payload + "\n", encoding="utf-8")
    if getattr(args, "json", False):
        print(payload)
    else:
        print(text)


def _check_paths(paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise UsageError(f"no such file: {p}")


def _load(path: str, validate: bool = True):
    return read_instance(path, validate=validate)


def _apply_toggles(inst, args):
    cable = getattr(args, "cable_sizing", None)
    pipe = getattr(args, "pipe_sizing", None)
    if cable is None and pipe is None:
        return inst
    opts = Options(
        cable_sizing=inst.options.cable_sizing if cable is None else cable,
        pipe_sizing=inst.options.pipe_sizing if pipe is None else pipe,
    )
    inst = replace(inst, options=opts)
    rep = validate_instance(inst)
    if not rep.ok:
        raise InstanceError(str(rep))
    return inst


def _decisions_doc(path: str) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "decisions" in doc and "arcs" not in doc:
        doc = doc["decisions"]
    if not isinstance(doc, dict):
        raise InstanceError("decisions document must be a JSON object")
    return doc


# --------------------------------------------------------------------------- subcommands


def _cmd_validate(args, cfg):
    try:
        inst = _load(args.instance, validate=False)
    except (InstanceError, json.JSONDecodeError) as exc:
        print(f"invalid instance: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rep = validate_instance(inst)
    doc = {"valid": rep.ok, "violations": rep.violations, "is_tree": inst.is_tree,
           "nodes": inst.n_nodes, "arcs": inst.n_arcs}
    _emit(args, cfg, doc, str(rep))
    if not rep.ok:
        for v in rep.violations:
            print(f"invalid instance: {v}", file=sys.stderr)
    return EXIT_OK if rep.ok else EXIT_INVALID


def _cmd_gen(args, cfg):
    cfg.seed = 0 if args.seed is None else args.seed
    inst = generate_instance(args.n, args.topology, cfg.seed, args.demand_scale, args.heat_fraction,
                             args.cable_sizing, args.pipe_sizing)
    doc = instance_to_dict(inst)
    doc.setdefault("meta", {})
    doc["meta"] = {**doc["meta"], "generator": {"n": args.n, "topology": args.topology, "seed": cfg.seed,
                                                  "demand_scale": args.demand_scale,
                                                  "heat_fraction": args.heat_fraction}}
    payload = json.dumps(doc, indent=1)
    if args.output:
        Path(args.output).write_text(payload + "\n", encoding="utf-8")
    if args.json or not args.output:
        print(payload)
    else:
        print(f"wrote {args.output}: {inst.n_nodes} nodes, {inst.n_arcs} arcs, tree={inst.is_tree}")
    return EXIT_OK


def _cmd_formulate(args, cfg):
    inst = _load(args.instance)
    f = build_formulation(inst)
    text = export_text(f) if args.format == "text" else export_json(f)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}: {f.n_vars} variables, {f.n_rows} rows")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _solver_config(args) -> SolverConfig:
    return SolverConfig(gap_tol=args.gap, node_limit=args.node_limit, time_limit=args.time_limit,
                        renovation_grid=args.renovation_grid, threads=max(1, args.threads),
                        n_tangents=args.tangents)


def _result_exit(status: str) -> int:
    return _STATUS_EXIT.get(status, EXIT_INFEASIBLE)


def _write_plan(args, inst, res) -> None:
    if getattr(args, "plan", None) and res.decisions is not None:
        Path(args.plan).write_text(json.dumps(res.decisions.to_dict(inst), indent=1) + "\n", encoding="utf-8")


def _cmd_solve(args, cfg):
    inst = _apply_toggles(_load(args.instance), args)
    sc = _solver_config(args)
    cfg.solver = sc.to_dict()
    cfg.threads = sc.threads
    cfg.options = {"cable_sizing": inst.options.cable_sizing, "pipe_sizing": inst.options.pipe_sizing}
    res = solve(inst, sc)
    doc = res.to_dict(inst)
    _write_plan(args, inst, res)
    _emit(args, cfg, doc, plan_report(_json_safe(doc)))
    if res.status != "optimal":
        print(f"solve finished with status {res.status}: {res.message}", file=sys.stderr)
    return _result_exit(res.status)


def _cmd_simulate(args, cfg):
    inst = _load(args.instance)
    d = PlanDecisions.from_dict(inst, _decisions_doc(args.decisions))
    problems = decisions_problems(inst, d)
    rep = check_feasibility(inst, d)
    doc = {"feasible": rep.feasible, "violations": rep.violations,
           "decisions": d.to_dict(inst),
           "flow_state": rep.state.to_dict(inst) if rep.state is not None else None}
    code = EXIT_OK if rep.feasible else EXIT_INFEASIBLE
    if problems:
        code = EXIT_INVALID
    if rep.state is not None and not problems:
        f = build_formulation(inst)
        plan = embed_plan(f, d, rep.state)
        res = evaluate_residuals(f, plan, 1e-6)
        doc["plan_max_residual"] = float(max(res.max_violation, 0.0))
        doc["plan_residual_ok"] = res.ok
    _emit(args, cfg, doc, flow_report(_json_safe(doc)))
    if code:
        for v in rep.violations:
            print(f"simulate: {v}", file=sys.stderr)
    return code


def _cmd_oracle(args, cfg):
    inst = _load(args.instance)
    cfg.solver = {"grid": list(args.grid)}
    try:
        res = enumerate_exact(inst, args.grid)
    except SolverError as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return EXIT_LIMIT if "guard" in str(exc) else EXIT_INVALID
    doc = res.to_dict(inst)
    _write_plan(args, inst, res)
    _emit(args, cfg, doc, plan_report(_json_safe(doc)))
    return _result_exit(res.status)


def _cmd_report(args, cfg):
    doc = json.loads(Path(args.result).read_text(encoding="utf-8"))
    if "status" not in doc:
        raise UsageError("report expects a solve result document")
    text = plan_report(doc)
    if args.json:
        print(json.dumps(doc, indent=1))
    else:
        print(text)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate, "gen": _cmd_gen, "formulate": _cmd_formulate, "solve": _cmd_solve,
    "simulate": _cmd_simulate, "oracle": _cmd_oracle, "report": _cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    cfg = CliConfig(args.subcommand, verbosity=args.verbose, seed=args.seed)
    paths = [getattr(args, k, None) for k in ("instance", "decisions", "result")]
    cfg.inputs = [p for p in paths if p]
    try:
        _check_paths(paths)
        return _COMMANDS[args.subcommand](args, cfg)
    except UsageError as exc:
        print(f"decnet {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InstanceError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"decnet {args.subcommand}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
