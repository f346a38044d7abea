"""Augmented-Lagrangian solver for :class:`~ikform.formulation.NLProgram`.

Outer loop: classical (Powell-Hestenes-Rockafellar) augmented Lagrangian with
equalities ``h(x) = 0`` and inequalities ``g(x) <= 0`` folded in through
``max(0, mu + rho g)^2``.  Inner loop: BFGS restricted to the variables not
held at a bound, with a projected Armijo backtracking search that rejects
NaN trial points.  After each outer iteration a Gauss-Newton feasibility
polish is attempted; linear rows are solved exactly in that step, the rest
in their null space.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from .formulation import Evaluation, NLProgram

STATUSES = ("solved", "infeasible-stalled", "timeout", "evaluation-failure")


@dataclass(frozen=True)
class SolverOptions:
    feasibility_tol: float = 1e-8
    optimality_tol: float = 1e-6
    max_outer: int = 50
    max_inner: int = 200
    rho0: float = 10.0
    rho_growth: float = 10.0
    # penalty grows when the violation shrinks by less than this factor
    violation_shrink: float = 4.0
    rho_max: float = 1e12
    timeout: float | None = None
    max_step: float = 1.0
    polish: bool = True

    def __post_init__(self):
        for name in ("feasibility_tol", "optimality_tol", "rho0", "rho_growth", "violation_shrink", "rho_max", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if self.timeout is not None and not self.timeout > 0:
            raise ValueError("timeout must be positive")


@dataclass
class SolveResult:
    status: str
    x_star: np.ndarray
    cost: float
    max_constraint_violation: float
    outer_iterations: int
    inner_iterations_total: int
    wall_time: float
    evaluations: int = 0
    stationarity: float = math.nan
    violation_history: list = field(default_factory=list)

    @property
    def solved(self) -> bool:
        return self.status == "solved"


class _Timeout(Exception):
    pass


class _Problem:
    """Row bookkeeping and evaluation counting around an :class:`NLProgram`."""

    def __init__(self, program: NLProgram, opts: SolverOptions, deadline: float | None):
        self.p = program
        self.opts = opts
        self.deadline = deadline
        lo, hi = program.lower, program.upper
        self.eq = np.flatnonzero(lo == hi)
        ineq = lo != hi
        self.low = np.flatnonzero(ineq & np.isfinite(lo))
        self.up = np.flatnonzero(ineq & np.isfinite(hi))
        self.n_evals = 0
        self.best_x = None
        self.best_f = math.inf
        self.feasibility_only = getattr(program, "feasibility_only", False)

    def evaluate(self, x, derivatives=True) -> Evaluation:
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise _Timeout
        self.n_evals += 1
        ev = self.p.evaluate(x, derivatives)
        if ev.finite:
            v = self.violation(ev)
            if v <= self.opts.feasibility_tol and ev.f < self.best_f:
                self.best_x, self.best_f = ev.x.copy(), ev.f
        return ev

    def parts(self, c):
        p = self.p
        return c[self.eq] - p.lower[self.eq], p.lower[self.low] - c[self.low], c[self.up] - p.upper[self.up]

    def violation(self, ev: Evaluation) -> float:
        return self.p.violation(ev.c)


def _al_value(pb: _Problem, ev: Evaluation, lam, mu_l, mu_u, rho):
    h, gl, gu = pb.parts(ev.c)
    val = ev.f + lam @ h + 0.5 * rho * (h @ h)
    tl = np.maximum(0.0, mu_l + rho * gl)
    tu = np.maximum(0.0, mu_u + rho * gu)
    val += (tl @ tl - mu_l @ mu_l + tu @ tu - mu_u @ mu_u) / (2.0 * rho)
    if ev.grad is None:
        return val, None
    J = ev.jac
    grad = ev.grad + J[pb.eq].T @ (lam + rho * h) - J[pb.low].T @ tl + J[pb.up].T @ tu
    return val, grad


def _free_mask(x, g, lb, ub, tol=1e-12):
    at_lb = (x <= lb + tol) & (g > 0)
    at_ub = (x >= ub - tol) & (g < 0)
    return ~(at_lb | at_ub)


def _projected_gradient(x, g, lb, ub) -> float:
    if len(x) == 0:
        return 0.0
    return float(np.max(np.abs(np.clip(x - g, lb, ub) - x)))


def _backtrack(t: float, slope: float, dval: float) -> float:
    """Minimizer of the quadratic model along the ray, kept in ``[0.1 t, 0.5 t]``."""
    curv = dval - slope * t
    if curv > 0:
        return min(0.5 * t, max(0.1 * t, -slope * t * t / (2.0 * curv)))
    return 0.5 * t


def _inner(pb: _Problem, x, ev, lam, mu_l, mu_u, rho, tol, max_iter):
    """Approximately minimize the augmented Lagrangian over the variable box."""
    lb, ub = pb.p.lb, pb.p.ub
    n = len(x)
    val, g = _al_value(pb, ev, lam, mu_l, mu_u, rho)
    H = np.eye(n)
    fresh = True
    it = 0
    while it < max_iter:
        pg = _projected_gradient(x, g, lb, ub)
        if pg <= tol:
            break
        free = _free_mask(x, g, lb, ub)
        d = np.zeros(n)
        d[free] = -H[np.ix_(free, free)] @ g[free]
        slope = g @ d
        if not slope < 0:
            H = np.eye(n)
            fresh = True
            d = np.zeros(n)
            d[free] = -g[free]
            slope = g @ d
            if not slope < 0:
                break
        dmax = np.max(np.abs(d))
        if dmax > pb.opts.max_step:
            d *= pb.opts.max_step / dmax
            slope = g @ d
        t = 1.0
        accepted = False
        for _ in range(30):
            x_new = np.clip(x + t * d, lb, ub)
            ev_new = pb.evaluate(x_new)
            if not ev_new.finite:
                t *= 0.5
                continue
            val_new, g_new = _al_value(pb, ev_new, lam, mu_l, mu_u, rho)
            if val_new <= val + 1e-4 * (g @ (x_new - x)):
                accepted = True
                break
            t = _backtrack(t, slope, val_new - val)
        it += 1
        if not accepted:
            if fresh:
                break
            H = np.eye(n)
            fresh = True
            continue
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * math.sqrt((s @ s) * (y @ y)):
            if fresh:
                H = np.eye(n) * (sy / (y @ y))
            rho_k = 1.0 / sy
            Hy = H @ y
            H = H - rho_k * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho_k * rho_k * (y @ Hy) + rho_k) * np.outer(s, s)
            fresh = False
        x, ev, val, g = x_new, ev_new, val_new, g_new
        if abs(s).max() <= 1e-15 * max(1.0, abs(x).max()):
            break
    return x, ev, g, it


def _active_multipliers(pb: _Problem, x, ev: Evaluation, act_tol: float = 1e-6):
    """Least-squares multipliers on the active set.

    Returns ``(kkt, normals, lam, n_eq)`` where ``normals`` holds the active
    constraint gradients as columns (equalities first, then inequalities
    and bounds oriented so their multipliers are non-negative) and ``kkt``
    is ``|grad f + normals @ lam|_inf / max(1, |grad f|_inf)``.  This is
    independent of the running multiplier estimates, which lag badly when
    the optimum sits on a probe boundary where the IK map's slope blows up.
    """
    p = pb.p
    c, lo, hi = ev.c, p.lower, p.upper
    eq = lo == hi
    act_lo = ~eq & np.isfinite(lo) & (c - lo <= act_tol)
    act_hi = ~eq & np.isfinite(hi) & (hi - c <= act_tol)
    eye = np.eye(p.num_vars)
    A = np.hstack([ev.jac[eq].T, -ev.jac[act_lo].T, ev.jac[act_hi].T,
                   -eye[:, x <= p.lb + 1e-12], eye[:, x >= p.ub - 1e-12]])
    gf = ev.grad
    scale = max(1.0, float(np.max(np.abs(gf), initial=0.0)))
    n_eq = int(eq.sum())
    if A.shape[1] == 0:
        return float(np.max(np.abs(gf), initial=0.0)) / scale, A, np.zeros(0), 0
    lower = np.concatenate([np.full(n_eq, -np.inf), np.zeros(A.shape[1] - n_eq)])
    lam = lsq_linear(A, -gf, bounds=(lower, np.full(A.shape[1], np.inf)), method="bvls").x
    return float(np.max(np.abs(gf + A @ lam))) / scale, A, lam, n_eq


def _kkt_residual(pb: _Problem, x, ev: Evaluation) -> float:
    return _active_multipliers(pb, x, ev)[0]


def _refine(pb: _Problem, x, ev: Evaluation, max_iter: int = 100):
    """Reduced-space quasi-Newton on the active manifold of a feasible point.

    Each step moves in the null space of the binding constraint normals and
    is pulled back onto the feasible set by :func:`_polish`.  Returns the
    final point, its evaluation, the KKT residual and the step count.
    """
    opts = pb.opts
    lb, ub = pb.p.lb, pb.p.ub
    H = None
    basis_key = None
    kkt = math.inf
    it = 0
    while it < max_iter:
        kkt, A, lam, n_eq = _active_multipliers(pb, x, ev)
        if kkt <= opts.optimality_tol:
            break
        binding = np.ones(A.shape[1], dtype=bool)
        binding[n_eq:] = lam[n_eq:] > 0
        N = A[:, binding]
        Z = _null_space(N.T) if N.shape[1] else np.eye(len(x))
        if Z.shape[1] == 0:
            break
        key = tuple(np.flatnonzero(binding)) + (A.shape[1],)
        gL = ev.grad + A @ lam
        gz = Z.T @ gL
        if H is None or key != basis_key or H.shape[0] != Z.shape[1]:
            H = np.eye(Z.shape[1])
            basis_key = key
            fresh = True
        dz = -np.linalg.solve(H, gz)
        if not gz @ dz < 0:
            H = np.eye(Z.shape[1])
            fresh = True
            dz = -gz
        d = Z @ dz
        dmax = np.max(np.abs(d))
        if dmax > opts.max_step:
            d *= opts.max_step / dmax
            dz *= opts.max_step / dmax
        t = 1.0
        accepted = False
        slope = gz @ dz
        for _ in range(30):
            xt = np.clip(x + t * d, lb, ub)
            evt = pb.evaluate(xt)
            if evt.finite:
                xt, evt, vt = _polish(pb, xt, evt)
                if vt <= opts.feasibility_tol and evt.f <= ev.f + 1e-4 * t * slope:
                    accepted = True
                    break
                if vt <= opts.feasibility_tol:
                    t = _backtrack(t, slope, evt.f - ev.f)
                    continue
            t *= 0.5
        it += 1
        if not accepted:
            if fresh:
                break
            H = np.eye(Z.shape[1])
            fresh = True
            continue
        s = Z.T @ (xt - x)
        y = Z.T @ (evt.grad + A @ lam - gL) if evt.grad is not None else None
        x, ev = xt, evt
        if y is not None:
            sy = s @ y
            if sy > 1e-12 * math.sqrt((s @ s) * (y @ y)):
                Hs = H @ s
                H = H - np.outer(Hs, Hs) / (s @ Hs) + np.outer(y, y) / sy
                fresh = False
        if np.max(np.abs(s), initial=0.0) <= 1e-15 * max(1.0, np.max(np.abs(x))):
            break
    return x, ev, kkt, it


def _null_space(A, rcond=1e-12):
    if A.shape[0] == 0:
        return np.eye(A.shape[1])
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > rcond * max(1.0, s[0] if len(s) else 0.0)))
    return vt[rank:].T


def _polish(pb: _Problem, x, ev: Evaluation, max_iter: int = 20):
    """Gauss-Newton steps onto the violated rows; linear rows are solved exactly."""
    p = pb.p
    lb, ub = p.lb, p.ub
    viol = max(pb.violation(ev), p.bound_violation(x))
    target = 1e-3 * pb.opts.feasibility_tol
    for _ in range(max_iter):
        if viol <= target:
            break
        c = ev.c
        r = np.zeros(p.num_rows)
        eq = p.lower == p.upper
        r[eq] = c[eq] - p.lower[eq]
        below = ~eq & (c < p.lower)
        above = ~eq & (c > p.upper)
        r[below] = c[below] - p.lower[below]
        r[above] = c[above] - p.upper[above]
        rows = eq | below | above
        lin = rows & p.linear
        nl = rows & ~p.linear
        free = (x > lb + 1e-12) & (x < ub - 1e-12)
        free |= ~np.isfinite(lb) & ~np.isfinite(ub)
        if not np.any(free):
            break
        JF = ev.jac[:, free]
        A = JF[lin]
        dx_f = np.linalg.lstsq(A, -r[lin], rcond=None)[0] if np.any(lin) else np.zeros(int(free.sum()))
        if np.any(nl):
            N = _null_space(A)
            B = JF[nl] @ N
            if B.size:
                z = np.linalg.lstsq(B, -(r[nl] + JF[nl] @ dx_f), rcond=None)[0]
                dx_f = dx_f + N @ z
        dx = np.zeros_like(x)
        dx[free] = dx_f
        improved = False
        t = 1.0
        for _ in range(6):
            x_new = np.clip(x + t * dx, lb, ub)
            ev_new = pb.evaluate(x_new)
            if ev_new.finite:
                v_new = max(pb.violation(ev_new), p.bound_violation(x_new))
                if v_new < viol:
                    improved = True
                    break
            t *= 0.5
        if not improved:
            break
        x, ev, viol = x_new, ev_new, v_new
    return x, ev, viol


def solve(program: NLProgram, x0, opts: SolverOptions | None = None) -> SolveResult:
    """Minimize ``program`` from ``x0`` (projected onto the variable box)."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    deadline = t0 + opts.timeout if opts.timeout is not None else None
    pb = _Problem(program, opts, deadline)
    x = np.clip(np.asarray(x0, dtype=float).copy(), program.lb, program.ub)
    if x.shape != (program.num_vars,) or not np.all(np.isfinite(x)):
        raise ValueError("x0 must be a finite vector with one entry per variable")

    ev = program.evaluate(x)
    pb.n_evals += 1
    if not ev.finite:
        return SolveResult("evaluation-failure", x, math.nan, math.inf, 0, 0, time.perf_counter() - t0, pb.n_evals)

    lam = np.zeros(len(pb.eq))
    mu_l = np.zeros(len(pb.low))
    mu_u = np.zeros(len(pb.up))
    rho = opts.rho0
    inner_total = 0
    outer = 0
    history = []
    status = "infeasible-stalled"
    stationarity = math.nan
    prev_viol = pb.violation(ev)
    tol = max(opts.optimality_tol, 1e-2)
    try:
        if pb.feasibility_only and opts.polish:
            x, ev, viol = _polish(pb, x, ev)
            if viol <= opts.feasibility_tol:
                status = "solved"
                stationarity = 0.0
        while status != "solved" and outer < opts.max_outer:
            outer += 1
            x, ev, g, its = _inner(pb, x, ev, lam, mu_l, mu_u, rho, tol, opts.max_inner)
            inner_total += its
            h, gl, gu = pb.parts(ev.c)
            lam = lam + rho * h
            mu_l = np.maximum(0.0, mu_l + rho * gl)
            mu_u = np.maximum(0.0, mu_u + rho * gu)
            viol = pb.violation(ev)
            if opts.polish and viol <= 1e-2:
                xp, evp, vp = _polish(pb, x, ev)
                if vp <= opts.feasibility_tol or vp < viol:
                    x, ev, viol = xp, evp, vp
            history.append(viol)
            if viol <= opts.feasibility_tol:
                if pb.feasibility_only:
                    stationarity = 0.0
                else:
                    x, ev, stationarity, its = _refine(pb, x, ev)
                    inner_total += its
                    viol = max(pb.violation(ev), program.bound_violation(x))
            if viol <= opts.feasibility_tol and stationarity <= opts.optimality_tol:
                status = "solved"
                break
            if viol > opts.feasibility_tol and viol > prev_viol / opts.violation_shrink:
                rho *= opts.rho_growth
                if rho > opts.rho_max:
                    break
            prev_viol = min(prev_viol, viol)
            tol = max(opts.optimality_tol, 0.1 * tol)
    except _Timeout:
        status = "timeout"

    viol = max(pb.violation(ev), program.bound_violation(x))
    if status == "solved":
        return SolveResult(status, x, ev.f, viol, outer, inner_total, time.perf_counter() - t0,
                           pb.n_evals, stationarity, history)
    if pb.best_x is not None:
        x = pb.best_x
        ev = program.evaluate(x, derivatives=False)
        viol = max(pb.violation(ev), program.bound_violation(x))
    return SolveResult(status, x, ev.f, viol, outer, inner_total, time.perf_counter() - t0,
                       pb.n_evals, stationarity, history)


def check_gradients(program: NLProgram, x, h: float = 1e-6) -> float:
    """Max relative error between forward-mode and central-difference partials.

    The error of each entry is ``|ad - fd| / max(1, |ad|)``.
    """
    x = np.asarray(x, dtype=float)
    ev = program.evaluate(x)
    n = len(x)
    fd_grad = np.empty(n)
    fd_jac = np.empty((program.num_rows, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        hi = program.evaluate(x + e, derivatives=False)
        lo = program.evaluate(x - e, derivatives=False)
        fd_grad[i] = (hi.f - lo.f) / (2 * h)
        fd_jac[:, i] = (hi.c - lo.c) / (2 * h)
    a = np.concatenate([ev.grad, ev.jac.ravel()])
    b = np.concatenate([fd_grad, fd_jac.ravel()])
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))) if len(a) else 0.0
