"""Assembly of IK problems into nonlinear programs.

Two formulations are built from the same :class:`IKProblem`:

* ``build_old``: decision variables are the joint angles ``q``; the target
  pose is a nonlinear equality on ``FK(q)``.
* ``build_new``: decision variables are the end-effector pose ``(p, o)``
  and the self-motion parameters ``psi``; joints are ``IK(p, o, psi, kappa)``
  for a fixed branch ``kappa``.  Pose-target rows become linear, and probe
  rows keep the iterate inside the IK map's domain.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .analytic_ik import Branch, SingularConfigurationError, ik_map_for
from .constraints import Scene, joint_centering_cost, min_distance_residuals
from .geometry import Pose2, Pose3, rpy_vector
from .kinematics import PlanarChain, chain_from_dict, forward_kinematics, planar_fk

PROBE_MARGIN = 1e-9
TARGET_MODES = ("full", "position-only", "box-relaxed")


@dataclass(frozen=True)
class CostSpec:
    """Quadratic joint-centering cost ``(q - q_nom)^T M (q - q_nom)``.

    ``weight`` may be ``None`` (identity), a vector (diagonal) or a matrix.
    """

    weight: np.ndarray | None = None
    q_nom: np.ndarray | None = None

    def __call__(self, q):
        return joint_centering_cost(q, self.weight, self.q_nom)


@dataclass(eq=False)
class IKProblem:
    """One IK query: chain, target, constraints and cost.

    ``target_mode`` is ``full`` (pose equality), ``position-only`` or
    ``box-relaxed`` (position inside ``[p_lb, p_ub]`` with the orientation
    still fixed).  ``cost=None`` gives a feasibility problem.
    ``extra_inequalities`` return arrays that must be ``<= 0`` and
    ``extra_equalities`` arrays that must vanish; both take the joint vector.
    """

    chain: object
    target: Pose2 | Pose3
    target_mode: str = "full"
    p_lb: np.ndarray | None = None
    p_ub: np.ndarray | None = None
    cost: CostSpec | None = None
    scene: Scene | None = None
    extra_inequalities: Sequence[Callable] = field(default_factory=tuple)
    extra_equalities: Sequence[Callable] = field(default_factory=tuple)

    def __post_init__(self):
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.target_mode!r}")
        planar = isinstance(self.chain, PlanarChain)
        if planar != isinstance(self.target, Pose2):
            raise ValueError("planar chains take Pose2 targets and spatial chains Pose3 targets")
        if self.target_mode == "box-relaxed":
            if self.p_lb is None or self.p_ub is None:
                raise ValueError("box-relaxed targets need p_lb and p_ub")
            dim = 2 if planar else 3
            self.p_lb = np.asarray(self.p_lb, dtype=float).reshape(dim)
            self.p_ub = np.asarray(self.p_ub, dtype=float).reshape(dim)
            if np.any(self.p_lb > self.p_ub):
                raise ValueError("p_lb must not exceed p_ub")

    @property
    def planar(self) -> bool:
        return isinstance(self.chain, PlanarChain)

    @property
    def n_joints(self) -> int:
        return self.chain.n_joints

    def target_vector(self) -> np.ndarray:
        """Target as ``(x, y, theta)`` or ``(p, rpy)``."""
        if self.planar:
            return self.target.wrapped().as_array()
        return np.concatenate([self.target.position, self.target.rpy().as_array()])


@dataclass(frozen=True)
class Constraint:
    """Vector constraint ``lower <= fun(ctx) <= upper``.

    Equal bounds make an equality.  ``linear`` marks rows whose Jacobian is
    constant in the decision variables.
    """

    name: str
    fun: Callable
    lower: np.ndarray
    upper: np.ndarray
    linear: bool = False

    @property
    def size(self) -> int:
        return len(self.lower)


@dataclass
class Evaluation:
    """Cost, constraint values and (optionally) their derivatives at ``x``."""

    x: np.ndarray
    f: float
    c: np.ndarray
    grad: np.ndarray | None = None
    jac: np.ndarray | None = None

    @property
    def finite(self) -> bool:
        # a single sum is NaN or inf whenever any entry is
        total = self.f + float(np.sum(self.c))
        if self.grad is not None:
            total += float(np.sum(self.grad)) + float(np.sum(self.jac))
        return math.isfinite(total)


class NLProgram:
    """``min f(x)`` subject to ``lower <= c(x) <= upper`` and ``lb <= x <= ub``.

    ``prepare(x)`` computes quantities shared by the cost and all constraint
    callbacks (for example one IK evaluation); each callback receives its
    result.  Evaluation with derivatives seeds :class:`~ikform.autodiff.Dual`
    variables, so a single pass yields all gradients.
    """

    def __init__(self, num_vars: int, lb, ub, cost: Callable, constraints: list[Constraint],
                 prepare: Callable | None = None, to_joints: Callable | None = None, name: str = "",
                 var_names: Sequence[str] | None = None, feasibility_only: bool = False):
        self.num_vars = int(num_vars)
        self.lb = np.broadcast_to(np.asarray(lb, dtype=float), (self.num_vars,)).copy()
        self.ub = np.broadcast_to(np.asarray(ub, dtype=float), (self.num_vars,)).copy()
        if np.any(self.lb > self.ub):
            raise ValueError("variable lower bound exceeds upper bound")
        self.cost = cost
        self.constraints = list(constraints)
        self.prepare = prepare or (lambda x: x)
        self._to_joints = to_joints
        self.name = name
        self.feasibility_only = feasibility_only
        self.var_names = list(var_names) if var_names is not None else [f"x{i}" for i in range(self.num_vars)]
        self.lower = np.concatenate([c.lower for c in self.constraints]) if self.constraints else np.zeros(0)
        self.upper = np.concatenate([c.upper for c in self.constraints]) if self.constraints else np.zeros(0)
        self.linear = (
            np.concatenate([np.full(c.size, c.linear) for c in self.constraints])
            if self.constraints else np.zeros(0, dtype=bool)
        )
        self.row_names = [f"{c.name}[{i}]" for c in self.constraints for i in range(c.size)]

    @property
    def num_rows(self) -> int:
        return len(self.lower)

    def evaluate(self, x, derivatives: bool = True) -> Evaluation:
        """Evaluate everything at ``x``; undefined points come back as NaN."""
        x = np.asarray(x, dtype=float)
        n, m = self.num_vars, self.num_rows
        xv = ad.Dual.variables(x) if derivatives else x
        try:
            with np.errstate(all="ignore"):
                ctx = self.prepare(xv)
                f = self.cost(ctx)
                rows = [c.fun(ctx) for c in self.constraints]
        except (SingularConfigurationError, ZeroDivisionError, FloatingPointError):
            nan = np.full(m, np.nan)
            if derivatives:
                return Evaluation(x, math.nan, nan, np.full(n, np.nan), np.full((m, n), np.nan))
            return Evaluation(x, math.nan, nan)
        fval = float(ad.value(f))
        cval = np.concatenate([np.atleast_1d(ad.value(r)) for r in rows]) if rows else np.zeros(0)
        if not derivatives:
            return Evaluation(x, fval, cval)
        grad = ad.partials(f, n).reshape(n)
        jac = (np.concatenate([ad.partials(r, n).reshape(-1, n) for r in rows], axis=0)
               if rows else np.zeros((0, n)))
        return Evaluation(x, fval, cval, grad, jac)

    def violation(self, c: np.ndarray, rows=None) -> float:
        """Max bound violation of constraint values ``c`` (``inf`` if NaN)."""
        lo, hi = self.lower, self.upper
        if rows is not None:
            c, lo, hi = c[rows], lo[rows], hi[rows]
        if len(c) == 0:
            return 0.0
        if not np.all(np.isfinite(c)):
            return math.inf
        v = np.maximum(lo - c, c - hi)
        return float(max(0.0, np.max(v)))

    def bound_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if len(x) == 0:
            return 0.0
        return float(max(0.0, np.max(np.maximum(self.lb - x, x - self.ub))))

    def max_violation(self, x) -> float:
        """Max violation of all rows and variable bounds at ``x``."""
        ev = self.evaluate(x, derivatives=False)
        return max(self.violation(ev.c), self.bound_violation(x))

    def to_joints(self, x) -> np.ndarray:
        """Joint vector represented by ``x``."""
        if self._to_joints is None:
            return np.asarray(x, dtype=float).copy()
        return self._to_joints(np.asarray(x, dtype=float))


# ---------------------------------------------------------------- shared rows

def _joint_rows(problem: IKProblem):
    """Constraint callbacks on the joint vector ``q`` (collision, user g and h)."""
    rows = []
    scene = problem.scene
    if scene is not None and scene.spheres:
        chain = problem.chain

        def collision(q):
            return min_distance_residuals(chain, q, scene.spheres, scene.boxes, scene.d_min)

        size = len(np.atleast_1d(collision(np.zeros(problem.n_joints))))
        if size:
            rows.append(("collision", collision, np.zeros(size), np.full(size, np.inf)))
    q_probe = np.zeros(problem.n_joints)
    for i, g in enumerate(problem.extra_inequalities):
        size = len(np.atleast_1d(ad.value(g(q_probe))))
        rows.append((f"g{i}", g, np.full(size, -np.inf), np.zeros(size)))
    for i, h in enumerate(problem.extra_equalities):
        size = len(np.atleast_1d(ad.value(h(q_probe))))
        rows.append((f"h{i}", h, np.zeros(size), np.zeros(size)))
    return rows


def _cost_fn(problem: IKProblem):
    if problem.cost is None:
        return lambda q: 0.0
    return problem.cost


def _pose_vector(pose):
    if isinstance(pose, Pose2):
        return ad.stack([pose.x, pose.y, pose.theta]) if ad.is_dual(pose.x) else pose.as_array()
    return ad.concatenate([pose.position, rpy_vector(pose.rotation)])


# ---------------------------------------------------------------- old formulation

class _JointContext:
    __slots__ = ("q", "pose")

    def __init__(self, q, pose):
        self.q, self.pose = q, pose


def build_old(problem: IKProblem) -> NLProgram:
    """Joint-space program: variables ``q``, nonlinear pose rows on ``FK(q)``."""
    chain = problem.chain
    n = problem.n_joints
    planar = problem.planar
    target = problem.target_vector()
    cost_q = _cost_fn(problem)
    pos_dim = 2 if planar else 3

    def prepare(q):
        pose = planar_fk(chain, q) if planar else forward_kinematics(chain, q)
        return _JointContext(q, _pose_vector(pose))

    constraints = []
    if problem.target_mode in ("full", "box-relaxed"):
        rot = slice(pos_dim, None)

        def orientation(ctx):
            return ad.wrap_angle(ctx.pose[rot] - target[rot])

        k = len(target) - pos_dim
        constraints.append(Constraint("orientation", orientation, np.zeros(k), np.zeros(k)))
    if problem.target_mode == "box-relaxed":
        constraints.append(Constraint("position_box", lambda ctx: ctx.pose[:pos_dim], problem.p_lb, problem.p_ub))
    else:
        tp = target[:pos_dim]
        constraints.insert(0, Constraint("position", lambda ctx: ctx.pose[:pos_dim] - tp,
                                         np.zeros(pos_dim), np.zeros(pos_dim)))
    for name, fun, lo, hi in _joint_rows(problem):
        constraints.append(Constraint(name, (lambda f: lambda ctx: f(ctx.q))(fun), lo, hi))

    return NLProgram(n, chain.q_lb, chain.q_ub, lambda ctx: cost_q(ctx.q), constraints, prepare, name="old",
                     var_names=[f"q{i}" for i in range(n)], feasibility_only=problem.cost is None)


# ---------------------------------------------------------------- new formulation

class _IKContext:
    __slots__ = ("x", "q", "probes")

    def __init__(self, x, q, probes):
        self.x, self.q, self.probes = x, q, probes


def build_new(problem: IKProblem, branch: Branch) -> NLProgram:
    """Program over ``(pose, psi)`` with joints eliminated by the analytic IK.

    Variable layout: pose variables first (``x, y, theta`` or ``p, rpy``),
    then the self-motion parameters.  Prefix joints that appear directly as
    self-motion parameters keep their joint limits as variable bounds; all
    other joint limits pass through the IK map as nonlinear rows.
    """
    chain = problem.chain
    ik = ik_map_for(chain)
    if len(branch) != ik.branch_size:
        raise ValueError(f"branch needs {ik.branch_size} signs")
    pd = ik.pose_dim
    n_psi = ik.n_psi
    n = pd + n_psi
    n_free_joints = ik.n_joints - (3 if problem.planar else 7)
    pos_dim = 2 if problem.planar else 3
    target = problem.target_vector()
    cost_q = _cost_fn(problem)

    def prepare(x):
        pose = ik.pose_from_vars(x[:pd])
        res = ik.solve(pose, x[pd:], branch)
        return _IKContext(x, res.q, res.probes)

    constraints = []
    idx = np.arange(pd)
    if problem.target_mode == "box-relaxed":
        rot_idx = idx[pos_dim:]
        constraints.append(Constraint("position_box", lambda ctx: ctx.x[:pos_dim], problem.p_lb, problem.p_ub, True))
        constraints.append(Constraint("orientation", lambda ctx: ctx.x[pos_dim:pd] - target[rot_idx],
                                      np.zeros(len(rot_idx)), np.zeros(len(rot_idx)), True))
    elif problem.target_mode == "position-only":
        tp = target[:pos_dim]
        constraints.append(Constraint("position", lambda ctx: ctx.x[:pos_dim] - tp,
                                      np.zeros(pos_dim), np.zeros(pos_dim), True))
    else:
        constraints.append(Constraint("pose", lambda ctx: ctx.x[:pd] - target, np.zeros(pd), np.zeros(pd), True))

    tail = slice(n_free_joints, None)
    q_lb, q_ub = np.asarray(chain.q_lb, float)[tail], np.asarray(chain.q_ub, float)[tail]
    constraints.append(Constraint("joint_limits", lambda ctx: ctx.q[tail], q_lb, q_ub))

    n_probes = 1 if problem.planar else 6
    constraints.append(Constraint("reachability", lambda ctx: ctx.probes,
                                  np.full(n_probes, PROBE_MARGIN), np.full(n_probes, np.inf)))
    for name, fun, lo, hi in _joint_rows(problem):
        constraints.append(Constraint(name, (lambda f: lambda ctx: f(ctx.q))(fun), lo, hi))

    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    lb[pd:pd + n_free_joints] = np.asarray(chain.q_lb, float)[:n_free_joints]
    ub[pd:pd + n_free_joints] = np.asarray(chain.q_ub, float)[:n_free_joints]

    def to_joints(x):
        return ik.solve(ik.pose_from_vars(x[:pd]), x[pd:], branch).q_value

    names = (["x", "y", "theta"] if problem.planar else ["px", "py", "pz", "roll", "pitch", "yaw"])
    names += [f"psi{i}" for i in range(n_psi)]
    prog = NLProgram(n, lb, ub, lambda ctx: cost_q(ctx.q), constraints, prepare, to_joints,
                     name=f"new[{branch}]", var_names=names, feasibility_only=problem.cost is None)
    prog.ik_map = ik
    prog.branch = branch
    return prog


def match_initial_guess(q0, ik_map):
    """``(pose, psi, branch)`` reproducing ``q0`` through ``ik_map``.

    Raises :class:`SingularConfigurationError` (resample) near singularities.
    """
    return ik_map.match(q0)


def new_initial_guess(q0, ik_map) -> tuple[np.ndarray, Branch]:
    """Decision vector of the new formulation matching joint vector ``q0``."""
    pose, psi, branch = ik_map.match(q0)
    return np.concatenate([ik_map.pose_to_vars(pose), np.asarray(psi, dtype=float)]), branch


# ---------------------------------------------------------------- serialization

def _resolve(ref, base_dir: Path):
    if isinstance(ref, (str, Path)):
        path = Path(ref)
        if not path.is_absolute():
            path = base_dir / path
        return json.loads(path.read_text())
    return ref


def problem_from_dict(d: dict, base_dir: str | Path = ".") -> IKProblem:
    """Build a problem from its JSON description.

    Keys: ``chain`` (object or file path), ``target``, optional
    ``target_mode``, ``p_lb``/``p_ub``, ``cost`` (``{weight, q_nom}`` or
    null) and ``scene`` (object or file path).
    """
    base_dir = Path(base_dir)
    chain = chain_from_dict(_resolve(d["chain"], base_dir))
    planar = isinstance(chain, PlanarChain)
    target = Pose2.from_dict(d["target"]) if planar else Pose3.from_dict(d["target"])
    cost = d.get("cost", {})
    cost_spec = None
    if cost is not None:
        w = cost.get("weight")
        qn = cost.get("q_nom")
        cost_spec = CostSpec(None if w is None else np.asarray(w, float), None if qn is None else np.asarray(qn, float))
    scene = d.get("scene")
    return IKProblem(
        chain=chain,
        target=target,
        target_mode=d.get("target_mode", "full"),
        p_lb=d.get("p_lb"),
        p_ub=d.get("p_ub"),
        cost=cost_spec,
        scene=Scene.from_dict(_resolve(scene, base_dir)) if scene is not None else None,
    )


def load_problem(path: str | Path) -> IKProblem:
    path = Path(path)
    return problem_from_dict(json.loads(path.read_text()), path.parent)
