"""Command-line entry point: solve, validate, oracle, export-lp."""

from __future__ import annotations

import argparse
import json
import sys

from .instance import DEFAULT_BIG_M, InstanceError, load_instance, validate_instance
from .solver import DEFAULTS, SolverParams, dump_solution, solve


def _load(path: str):
    inst = load_instance(path)
    issues = validate_instance(inst)
    if issues:
        for i in issues:
            print(i, file=sys.stderr)
        raise SystemExit(2)
    return inst


def cmd_solve(args: argparse.Namespace) -> int:
    inst = _load(args.instance)
    mode = args.mode or inst.integrality
    d = DEFAULTS[mode]
    params = SolverParams(
        main_iterations=args.main_iterations if args.main_iterations is not None else d["main_iterations"],
        max_perturbations=args.max_perturbations if args.max_perturbations is not None else d["max_perturbations"],
        max_logics=args.max_logics if args.max_logics is not None else d["max_logics"],
        seed=args.seed,
        mode=args.mode,
        always_shuffle=args.always_shuffle,
        workers=args.workers,
        time_limit_secs=args.time_limit_secs,
    )
    report = solve(inst, params)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(report.to_document(), f, indent=2)
            f.write("\n")
    if report.best_solution is None:
        print("no feasible solution found", file=sys.stderr)
        for r in report.reasons:
            print(f"  {r}", file=sys.stderr)
        return 1
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(dump_solution(report.best_solution))
    print(f"makespan {report.best_solution['objective']['makespan']:.9g}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    from .validation import check_all

    inst = _load(args.instance)
    with open(args.solution, encoding="utf-8") as f:
        sol = json.load(f)
    rep = check_all(inst, sol)
    for v in rep.violations:
        print(v)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0 if not rep.violations else 1


def cmd_oracle(args: argparse.Namespace) -> int:
    from .oracle import OracleInfeasible, OracleLimitError, brute_force_oracle

    inst = _load(args.instance)
    try:
        res = brute_force_oracle(inst, max_stops=args.max_stops)
    except (OracleInfeasible, OracleLimitError) as e:
        print(e, file=sys.stderr)
        return 1
    print(json.dumps({"sorted_durations": res.vector}))
    return 0


def cmd_export_lp(args: argparse.Namespace) -> int:
    from .milp import ModelTooLarge, build_model, count_report, emit_lp

    inst = _load(args.instance)
    try:
        cs = build_model(
            inst,
            args.levels,
            big_m=args.big_m,
            optional_constraints=args.optional_constraints,
            eq625_all_cargo=args.all_cargo_residue,
            variable_budget=args.max_variables,
        )
    except ModelTooLarge as e:
        print(e, file=sys.stderr)
        return 1
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(emit_lp(cs))
    if args.counts:
        with open(args.counts, "w", encoding="utf-8") as f:
            json.dump(count_report(cs), f, indent=2)
            f.write("\n")
    tot = count_report(cs)["totals"]
    print(f"{tot['variables']} variables, {tot['constraints']} constraints")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reliefroute", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run the heuristic")
    s.add_argument("--instance", required=True)
    s.add_argument("--main-iterations", type=int)
    s.add_argument("--max-perturbations", type=int)
    s.add_argument("--max-logics", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=["integer", "continuous"])
    s.add_argument("--time-limit-secs", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.add_argument("--always-shuffle", action="store_true", help="shuffle logic labels in every iteration")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a solution file")
    v.add_argument("--instance", required=True)
    v.add_argument("--solution", required=True)
    v.set_defaults(func=cmd_validate)

    o = sub.add_parser("oracle", help="exact cascaded optimum for tiny instances")
    o.add_argument("--instance", required=True)
    o.add_argument("--max-stops", type=int, default=5)
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("export-lp", help="write the MILP in LP format")
    e.add_argument("--instance", required=True)
    e.add_argument("--levels", type=int, default=1)
    e.add_argument("--big-m", type=float, default=DEFAULT_BIG_M)
    e.add_argument("--optional-constraints", action="store_true")
    e.add_argument("--all-cargo-residue", action="store_true", help="zero net port residue for delivery cargo too")
    e.add_argument("--max-variables", type=int, default=250_000)
    e.add_argument("--counts", help="write per-family counts as JSON")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_lp)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InstanceError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
