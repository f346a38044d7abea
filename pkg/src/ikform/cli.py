"""``ikform`` command line: benchmarks, gradient checks and single solves."""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import bench
from .analytic_ik import Branch, SingularConfigurationError, ik_map_for
from .formulation import build_new, build_old, load_problem, new_initial_guess
from .sampling import SamplePlan, sample_ik
from .solver import SolverOptions, solve

GRADIENT_TOL = 1e-4


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _methods(text: str) -> tuple:
    items = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [m for m in items if m not in ("old", "new", "sampling")]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"unknown method(s): {', '.join(bad) or '(none)'}")
    return items


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver options")
    g.add_argument("--options", metavar="JSON", help="file with a JSON object of solver options")
    g.add_argument("--feasibility-tol", type=float)
    g.add_argument("--optimality-tol", type=float)
    g.add_argument("--max-outer", type=int)
    g.add_argument("--max-inner", type=int)


def _solver_options(args, timeout=None) -> SolverOptions:
    opts = {}
    if getattr(args, "options", None):
        with open(args.options) as fh:
            opts.update(json.load(fh))
    for key in ("feasibility_tol", "optimality_tol", "max_outer", "max_inner"):
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    if timeout is not None:
        opts["timeout"] = timeout
    return SolverOptions(**opts)


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--timing", action="store_true", help="fill the wall_time_s column (breaks byte determinism)")


def _write(records, args) -> None:
    text = bench.emit(records, args.format, None if args.out == "-" else args.out)
    if args.out == "-":
        sys.stdout.write(text)
    rates = bench.success_rates(records)
    for (exp, n, method), rate in rates.items():
        print(f"{exp} n_links={n} {method}: success {rate:.3f}", file=sys.stderr)


def _cmd_bench_2d(args) -> int:
    targets = 300 if args.paper_scale else args.targets
    records = bench.run_2d_scaling(args.n, targets, args.seed, args.methods, _solver_options(args, args.timeout),
                                   args.budget, args.timing)
    _write(records, args)
    return 0


def _cmd_bench_3d(args) -> int:
    targets = 200 if args.paper_scale else args.targets
    records = bench.run_3d_scaling(args.n, targets, args.seed, args.mode, args.source, args.methods, args.timeout,
                                   _solver_options(args), args.budget, args.timing)
    _write(records, args)
    return 0


def _cmd_bench_stability(args) -> int:
    records = bench.run_stability_toy(args.seed, args.trials, timing=args.timing)
    text = bench.emit(records, args.format, None if args.out == "-" else args.out)
    if args.out == "-":
        sys.stdout.write(text)
    for method, rate in bench.stability_agreement(records).items():
        print(f"stability {method}: oracle agreement {rate:.3f}", file=sys.stderr)
    return 0


def _cmd_check_gradients(args) -> int:
    worst = 0.0
    for formulation, arm in bench.GRADIENT_FAMILIES:
        err = float(np.max(bench.gradient_errors(formulation, arm, args.points, args.seed)))
        worst = max(worst, err)
        verdict = "ok" if err < GRADIENT_TOL else "FAIL"
        print(f"{formulation:>3} {arm:<6} max relative error {err:.3e}  {verdict}")
    return 0 if worst < GRADIENT_TOL else 1


def _initial_joints(problem, args) -> np.ndarray:
    if args.q0:
        q0 = np.asarray([float(v) for v in args.q0.split(",")])
        if len(q0) != problem.n_joints:
            raise SystemExit(f"--q0 needs {problem.n_joints} values")
        return q0
    rng = np.random.default_rng(args.seed)
    lo = np.maximum(problem.chain.q_lb, -math.pi)
    hi = np.minimum(problem.chain.q_ub, math.pi)
    return rng.uniform(lo, hi)


def _cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    opts = _solver_options(args, args.timeout)
    out = {"method": args.method}
    if args.method == "sampling":
        ik = ik_map_for(problem.chain)
        found = sample_ik(problem, SamplePlan.from_budget(ik, args.budget))
        if found is None:
            out.update(status="infeasible", q=None, cost=None)
        else:
            out.update(status="solved", q=found.q.tolist(), cost=found.cost, branch=str(found.branch),
                       max_violation=bench.recheck(problem, found.q))
    else:
        q0 = _initial_joints(problem, args)
        if args.method == "old":
            program, x0 = build_old(problem), q0
        else:
            ik = ik_map_for(problem.chain)
            try:
                x0, branch = new_initial_guess(q0, ik)
            except SingularConfigurationError as exc:
                raise SystemExit(f"initial configuration unusable: {exc}")
            if args.branch:
                branch = Branch.parse(args.branch)
            program = build_new(problem, branch)
            out["branch"] = str(branch)
        res = solve(program, x0, opts)
        q = program.to_joints(res.x_star)
        status = res.status
        check = bench.recheck(problem, q)
        if status == "solved" and not check <= bench.RECHECK_TOL:
            status = "recheck-failed"
        out.update(status=status, q=q.tolist(), x=res.x_star.tolist(), cost=res.cost,
                   max_violation=max(res.max_constraint_violation, check),
                   outer_iterations=res.outer_iterations, iterations=res.inner_iterations_total)
    json.dump(out, sys.stdout, indent=1, default=float)
    sys.stdout.write("\n")
    return 0 if out["status"] == "solved" else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ikform", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a scaling experiment")
    bsub = b.add_subparsers(dest="experiment", required=True)

    p2 = bsub.add_parser("2d", help="planar redundancy scaling")
    p2.add_argument("--n", type=_int_list, default=[4, 8, 16], help="link counts, e.g. 4,8,16")
    p2.add_argument("--targets", type=int, default=100)
    p2.add_argument("--timeout", type=float, default=None)
    p2.add_argument("--methods", type=_methods, default=("old", "new", "sampling"))
    p2.add_argument("--budget", type=int, default=bench.DEFAULT_SAMPLE_BUDGET, help="sampling budget per target")
    p2.add_argument("--paper-scale", action="store_true", help="300 targets per link count")
    _add_output_flags(p2)
    _add_solver_flags(p2)
    p2.set_defaults(func=_cmd_bench_2d)

    p3 = bsub.add_parser("3d", help="scaled SRS arm redundancy scaling")
    p3.add_argument("--n", type=_int_list, default=[0, 4, 8], help="extra link counts (even)")
    p3.add_argument("--targets", type=int, default=50)
    p3.add_argument("--mode", choices=("feasibility", "optimality"), default="feasibility")
    p3.add_argument("--source", choices=("box", "fk"), default="box", help="target generator")
    p3.add_argument("--timeout", type=float, default=30.0)
    p3.add_argument("--methods", type=_methods, default=("old", "new", "sampling"))
    p3.add_argument("--budget", type=int, default=bench.DEFAULT_SAMPLE_BUDGET)
    p3.add_argument("--paper-scale", action="store_true", help="200 targets per link count")
    _add_output_flags(p3)
    _add_solver_flags(p3)
    p3.set_defaults(func=_cmd_bench_3d)

    ps = bsub.add_parser("stability", help="support-polygon toy problems")
    ps.add_argument("--trials", type=int, default=500)
    _add_output_flags(ps)
    ps.set_defaults(func=_cmd_bench_stability)

    c = sub.add_parser("check", help="validation harnesses")
    csub = c.add_subparsers(dest="check", required=True)
    cg = csub.add_parser("gradients", help="autodiff against central differences")
    cg.add_argument("--points", type=int, default=100)
    cg.add_argument("--seed", type=int, default=0)
    cg.set_defaults(func=_cmd_check_gradients)

    s = sub.add_parser("solve", help="solve one problem file")
    s.add_argument("--problem", required=True, help="problem JSON")
    s.add_argument("--method", choices=("old", "new", "sampling"), default="new")
    s.add_argument("--q0", help="comma-separated initial joints (default: random from --seed)")
    s.add_argument("--branch", help="branch signs for the new formulation, e.g. +-+")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--timeout", type=float, default=None)
    s.add_argument("--budget", type=int, default=bench.DEFAULT_SAMPLE_BUDGET)
    _add_solver_flags(s)
    s.set_defaults(func=_cmd_solve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"ikform: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
