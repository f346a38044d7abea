"""Seeded scaling experiments and result tables.

Each trial draws its randomness from ``default_rng([seed, experiment, n,
target])``, so any cell of the matrix can be reproduced on its own.  A
record marked ``solved`` has passed an independent re-check of every
constraint in joint space; solver successes that fail it are reported as
``recheck-failed``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .analytic_ik import SingularConfigurationError, ik_map_for
from .constraints import SupportPoints, hull_distance, stability_equality_residuals, stability_margin
from .formulation import Constraint, CostSpec, IKProblem, NLProgram, build_new, build_old, new_initial_guess
from .geometry import Pose2, Pose3, random_rotation
from .kinematics import PlanarChain, forward_kinematics, scaled_arm
from .sampling import RECHECK_TOL, SamplePlan, sample_ik
from .solver import SolverOptions, check_gradients, solve

COLUMNS = ("experiment", "n_links", "target_id", "method", "branch", "seed", "status", "cost",
           "iterations", "max_violation", "wall_time_s")
EXPERIMENT_IDS = {"2d": 2, "3d-feasibility": 3, "3d-optimality": 3, "stability": 6, "gradients": 9}
METHOD_ORDER = {"old": 0, "new": 1, "sampling": 2, "equality": 0, "inequality": 1}
DEFAULT_SAMPLE_BUDGET = 512
STABILITY_BAND = 1e-6


@dataclass
class TrialRecord:
    experiment: str
    n_links: int
    target_id: int
    method: str
    branch: str
    seed: int
    status: str
    cost: float
    iterations: int
    max_violation: float
    wall_time_s: float | None = None

    @property
    def success(self) -> bool:
        return self.status == "solved"


def trial_rng(seed: int, experiment: str, n: int, target: int) -> np.random.Generator:
    return np.random.default_rng([seed, EXPERIMENT_IDS[experiment], n, target])


def worker_count() -> int:
    """Worker pool size, capped by ``IKFORM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("IKFORM_THREADS", "1")))
    except ValueError:
        return 1


def recheck(problem: IKProblem, q) -> float:
    """Max joint-space violation of ``q``: pose by FK, limits, collision, extras."""
    return build_old(problem).max_violation(np.asarray(q, dtype=float))


def _solve_record(experiment, n_links, t, method, branch, seed, problem, program, x0, opts, timing):
    start = time.perf_counter()
    res = solve(program, x0, opts)
    elapsed = time.perf_counter() - start
    viol = res.max_constraint_violation
    status = res.status
    if np.all(np.isfinite(res.x_star)):
        check = recheck(problem, program.to_joints(res.x_star))
        viol = max(viol, check) if math.isfinite(check) else math.inf
        if status == "solved" and not check <= RECHECK_TOL:
            status = "recheck-failed"
    return TrialRecord(experiment, n_links, t, method, branch, seed, status, float(res.cost),
                       res.inner_iterations_total, float(viol), elapsed if timing else None)


def _sampling_record(experiment, n_links, t, seed, problem, budget, timing):
    start = time.perf_counter()
    plan = SamplePlan.from_budget(ik_map_for(problem.chain), budget)
    found = sample_ik(problem, plan)
    elapsed = time.perf_counter() - start
    n_samples = plan.budget(ik_map_for(problem.chain))
    if found is None:
        return TrialRecord(experiment, n_links, t, "sampling", "", seed, "infeasible", math.nan,
                           n_samples, math.nan, elapsed if timing else None)
    return TrialRecord(experiment, n_links, t, "sampling", str(found.branch), seed, "solved", found.cost,
                       n_samples, recheck(problem, found.q), elapsed if timing else None)


def _matched_guess(rng, ik, lo, hi, n_joints):
    while True:
        q0 = rng.uniform(lo, hi, n_joints)
        try:
            x0, branch = new_initial_guess(q0, ik)
        except SingularConfigurationError:
            continue
        return q0, x0, branch


def _run_cell(kind, n, t, seed, methods, opts, budget, timing, extra):
    if kind == "2d":
        return _trial_2d(n, t, seed, methods, opts, budget, timing)
    return _trial_3d(n, t, seed, methods, opts, budget, timing, *extra)


def _trial_2d(n, t, seed, methods, opts, budget, timing):
    rng = trial_rng(seed, "2d", n, t)
    chain = PlanarChain(n)
    ik = ik_map_for(chain)
    # the wrist stays within reach of the 3R tail inside this disk
    radius = math.sqrt(rng.uniform()) * (1.0 - 2.0 / n)
    angle = rng.uniform(-math.pi, math.pi)
    target = Pose2(radius * math.cos(angle), radius * math.sin(angle), rng.uniform(-math.pi, math.pi))
    problem = IKProblem(chain, target, cost=CostSpec())
    # IK returns wrapped tail angles, so draw q0 from [-pi, pi] to match exactly
    q0, x0, branch = _matched_guess(rng, ik, -math.pi, math.pi, n)
    return _records("2d", n, t, seed, methods, problem, q0, x0, branch, opts, budget, timing)


def _trial_3d(n, t, seed, methods, opts, budget, timing, mode, source):
    experiment = f"3d-{mode}"
    rng = trial_rng(seed, experiment, n, t)
    chain = scaled_arm(n)
    ik = ik_map_for(chain)
    if source == "fk":
        target = forward_kinematics(chain, rng.uniform(chain.q_lb, chain.q_ub)).numeric()
    else:
        target = Pose3(rng.uniform(-0.3, 0.3, 3), random_rotation(rng))
    cost = CostSpec() if mode == "optimality" else None
    problem = IKProblem(chain, target, cost=cost)
    q0, x0, branch = _matched_guess(rng, ik, chain.q_lb, chain.q_ub, chain.n_joints)
    return _records(experiment, chain.n_joints, t, seed, methods, problem, q0, x0, branch, opts, budget, timing)


def _records(experiment, n_links, t, seed, methods, problem, q0, x0, branch, opts, budget, timing):
    out = []
    if "old" in methods:
        out.append(_solve_record(experiment, n_links, t, "old", "", seed, problem, build_old(problem), q0, opts, timing))
    if "new" in methods:
        out.append(_solve_record(experiment, n_links, t, "new", str(branch), seed, problem,
                                 build_new(problem, branch), x0, opts, timing))
    if "sampling" in methods:
        out.append(_sampling_record(experiment, n_links, t, seed, problem, budget, timing))
    return out


def _run_matrix(kind, n_list, targets_per_n, seed, methods, opts, budget, timing, extra=(), workers=None):
    cells = [(kind, n, t, seed, tuple(methods), opts, budget, timing, extra)
             for n in n_list for t in range(targets_per_n)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, *zip(*cells)))
    else:
        chunks = [_run_cell(*cell) for cell in cells]
    return sort_records([r for chunk in chunks for r in chunk])


def sort_records(records):
    return sorted(records, key=lambda r: (r.experiment, r.n_links, r.target_id, METHOD_ORDER.get(r.method, 9), r.seed))


def run_2d_scaling(n_list=(4, 8, 16), targets_per_n: int = 100, seed: int = 0,
                   methods=("old", "new", "sampling"), opts: SolverOptions | None = None,
                   sample_budget: int = DEFAULT_SAMPLE_BUDGET, timing: bool = False, workers=None):
    """Planar arms with ``n`` links of length ``1/n`` and ``+-2 pi`` joint boxes.

    Targets are uniform in the disk ``|p| < 1 - 2/n`` with uniform heading;
    the cost is ``q^T q``.  Old and new formulations start from the same
    random configuration.
    """
    if any(n < 4 for n in n_list):
        raise ValueError("planar scaling needs n >= 4")
    return _run_matrix("2d", n_list, targets_per_n, seed, methods, opts or SolverOptions(), sample_budget, timing,
                       workers=workers)


def run_3d_scaling(n_list=(0, 4, 8), targets_per_n: int = 50, seed: int = 0, mode: str = "feasibility",
                   source: str = "box", methods=("old", "new", "sampling"), timeout: float | None = 30.0,
                   opts: SolverOptions | None = None, sample_budget: int = DEFAULT_SAMPLE_BUDGET,
                   timing: bool = False, workers=None):
    """Scaled SRS arms with ``n`` extra links.

    ``source="box"`` draws positions in ``[-0.3, 0.3]^3`` with a uniform
    random orientation (not always reachable); ``source="fk"`` takes the FK
    of a random configuration.  The branch of the new formulation is that of
    the random initial configuration.
    """
    if mode not in ("feasibility", "optimality"):
        raise ValueError("mode must be feasibility or optimality")
    if source not in ("box", "fk"):
        raise ValueError("source must be box or fk")
    if any(n < 0 or n % 2 for n in n_list):
        raise ValueError("extra link counts must be even and non-negative")
    base = opts or SolverOptions()
    if timeout is not None:
        base = SolverOptions(**{**asdict(base), "timeout": timeout})
    return _run_matrix("3d", n_list, targets_per_n, seed, methods, base, sample_budget, timing,
                       extra=(mode, source), workers=workers)


# ---------------------------------------------------------------- stability toy

def _equality_program(support: SupportPoints, p) -> NLProgram:
    k = len(support.points)

    def rows(lam):
        return stability_equality_residuals(p, support, lam)

    return NLProgram(k, 0.0, 1.0, lambda lam: 0.0, [Constraint("hull", rows, np.zeros(3), np.zeros(3), True)],
                     name="stability-equality", feasibility_only=True)


def _inequality_program(support: SupportPoints, p) -> NLProgram:
    # z is pinned to p by linear rows; the margin row decides feasibility
    cons = [
        Constraint("com", lambda z: z - p, np.zeros(2), np.zeros(2), True),
        Constraint("margin", lambda z: ad.stack([stability_margin(z, support, beta=None)]), np.zeros(1),
                   np.full(1, np.inf)),
    ]
    return NLProgram(2, -10.0, 10.0, lambda z: 0.0, cons, name="stability-inequality", feasibility_only=True)


def stability_instance(rng: np.random.Generator):
    """Eight support points in the unit square and a query point around it."""
    support = rng.uniform(-1.0, 1.0, (8, 2))
    p = rng.uniform(-1.5, 1.5, 2)
    return support, p


def oracle_label(support, p, band: float = STABILITY_BAND) -> str:
    d = hull_distance(p, support)
    if abs(d) <= band:
        return "boundary"
    return "inside" if d > 0 else "outside"


def run_stability_toy(seed: int = 0, trials: int = 500, opts: SolverOptions | None = None, timing: bool = False):
    """Support-polygon containment solved as tiny NLPs in both encodings.

    The ``branch`` column carries the hull oracle's label (``inside``,
    ``outside`` or ``boundary``); a trial agrees with the oracle when
    ``solved`` matches ``inside``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    opts = opts or SolverOptions(max_outer=20)
    out = []
    for t in range(trials):
        support_pts, p = stability_instance(trial_rng(seed, "stability", 8, t))
        support = SupportPoints(support_pts)
        label = oracle_label(support_pts, p)
        x0s = {"equality": np.full(8, 1.0 / 8), "inequality": np.zeros(2)}
        for method, build in (("equality", _equality_program), ("inequality", _inequality_program)):
            prog = build(support, p)
            start = time.perf_counter()
            res = solve(prog, x0s[method], opts)
            elapsed = time.perf_counter() - start
            out.append(TrialRecord("stability", 8, t, method, label, seed, res.status, float(res.cost),
                                   res.inner_iterations_total, float(res.max_constraint_violation),
                                   elapsed if timing else None))
    return sort_records(out)


def stability_agreement(records) -> dict:
    """Fraction of off-boundary trials whose verdict matches the oracle, per encoding."""
    result = {}
    for method in ("equality", "inequality"):
        rel = [r for r in records if r.method == method and r.branch != "boundary"]
        if rel:
            result[method] = sum((r.status == "solved") == (r.branch == "inside") for r in rel) / len(rel)
    return result


# ---------------------------------------------------------------- gradients

GRADIENT_FAMILIES = (("old", "planar"), ("new", "planar"), ("old", "srs"), ("new", "srs"))
PROBE_CLEARANCE = 1e-3


def gradient_errors(formulation: str, arm: str, points: int = 100, seed: int = 0, h: float = 1e-6) -> np.ndarray:
    """Relative autodiff-vs-central-difference errors at random points.

    ``arm`` is ``planar`` (6 links) or ``srs`` (7 joints).  Every point gets
    its own FK-generated target and random configuration; new-formulation
    points whose smallest probe is within ``PROBE_CLEARANCE`` of zero are
    redrawn.
    """
    if formulation not in ("old", "new") or arm not in ("planar", "srs"):
        raise ValueError("formulation must be old|new and arm planar|srs")
    chain = PlanarChain(6) if arm == "planar" else scaled_arm(0)
    ik = ik_map_for(chain)
    errors = []
    k = 0
    while len(errors) < points:
        rng = trial_rng(seed, "gradients", 2 * chain.n_joints + (formulation == "new"), k)
        k += 1
        q_target = rng.uniform(-np.pi, np.pi, chain.n_joints)
        target = ik.forward(q_target)
        target = target.numeric() if isinstance(target, Pose3) else Pose2(*ad.value(target.as_array()))
        problem = IKProblem(chain, target, cost=CostSpec())
        q = rng.uniform(-np.pi, np.pi, chain.n_joints)
        if formulation == "old":
            errors.append(check_gradients(build_old(problem), q, h))
            continue
        try:
            x, branch = new_initial_guess(q, ik)
        except SingularConfigurationError:
            continue
        if np.min(ik.solve(ik.pose_from_vars(x[:ik.pose_dim]), x[ik.pose_dim:], branch).probe_values) < PROBE_CLEARANCE:
            continue
        errors.append(check_gradients(build_new(problem, branch), x, h))
    return np.asarray(errors)


# ---------------------------------------------------------------- output

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def records_to_json(records) -> str:
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    return json.dumps([{c: clean(getattr(r, c)) for c in COLUMNS} for r in records], indent=1) + "\n"


def emit(records, fmt: str = "csv", path=None) -> str:
    """Write records as CSV or JSON to ``path`` (or just return the text)."""
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    text = records_to_csv(records) if fmt == "csv" else records_to_json(records)
    if path is not None and str(path) != "-":
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc
    return text


def _parse(field_type, text):
    if field_type == "float | None":
        return float(text) if text else None
    if field_type == "float":
        return float(text)
    if field_type == "int":
        return int(text)
    return text


def read_csv(path_or_text: str) -> list[TrialRecord]:
    """Parse a CSV produced by :func:`emit` back into records."""
    text = path_or_text
    if "\n" not in path_or_text:
        with open(path_or_text) as fh:
            text = fh.read()
    types = {f.name: str(f.type) for f in fields(TrialRecord)}
    rows = csv.DictReader(io.StringIO(text))
    return [TrialRecord(**{k: _parse(types[k], v) for k, v in row.items()}) for row in rows]


def success_rates(records) -> dict:
    """``{(experiment, n_links, method): rate}``."""
    groups = {}
    for r in records:
        groups.setdefault((r.experiment, r.n_links, r.method), []).append(r.success)
    return {k: sum(v) / len(v) for k, v in sorted(groups.items())}


__all__ = [
    "TrialRecord", "COLUMNS", "run_2d_scaling", "run_3d_scaling", "run_stability_toy", "stability_agreement",
    "emit", "read_csv", "gradient_errors", "GRADIENT_FAMILIES", "recheck", "success_rates", "sort_records", "trial_rng", "worker_count",
]
