"""Grid-sampling baseline over self-motion parameters and branches.

Every grid point ``(psi, branch)`` is pushed through the analytic IK map;
points whose probes are negative, or whose joints violate limits, collision
or extra constraints, are discarded, and the cheapest survivor is returned.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .analytic_ik import Branch, ik_map_for
from .formulation import IKProblem, build_old

RECHECK_TOL = 1e-8


@dataclass(frozen=True)
class SamplePlan:
    """Uniform grid: ``resolution`` points per self-motion parameter.

    ``branches=None`` means every branch of the IK map.  Grid points along a
    parameter with range ``[lo, hi)`` are ``lo + (hi - lo) * i / r``, so a
    plan with resolution ``2r`` contains every point of resolution ``r``.
    """

    resolution: int | tuple = 64
    branches: tuple | None = None

    def __post_init__(self):
        res = self.resolution
        vals = (res,) if isinstance(res, (int, np.integer)) else tuple(res)
        if not vals or any(int(r) < 1 for r in vals):
            raise ValueError("resolutions must be positive")
        if self.branches is not None:
            object.__setattr__(self, "branches", tuple(
                b if isinstance(b, Branch) else Branch(tuple(b)) for b in self.branches))
            if not self.branches:
                raise ValueError("branch set must not be empty")

    def resolutions(self, n_psi: int) -> tuple:
        if isinstance(self.resolution, (int, np.integer)):
            return (int(self.resolution),) * n_psi
        res = tuple(int(r) for r in self.resolution)
        if len(res) != n_psi:
            raise ValueError(f"need {n_psi} resolutions, got {len(res)}")
        return res

    def branch_set(self, ik_map) -> tuple:
        return tuple(ik_map.branches()) if self.branches is None else self.branches

    def budget(self, ik_map) -> int:
        return math.prod(self.resolutions(ik_map.n_psi)) * len(self.branch_set(ik_map))

    @classmethod
    def from_budget(cls, ik_map, budget: int) -> "SamplePlan":
        """Largest uniform resolution whose grid fits in ``budget`` samples."""
        n_branch = len(ik_map.branches())
        dim = ik_map.n_psi
        if dim == 0:
            return cls(1)
        r = int(math.floor((budget / n_branch) ** (1.0 / dim) + 1e-9))
        return cls(max(r, 1))


@dataclass(frozen=True)
class SampleResult:
    q: np.ndarray
    cost: float
    psi: np.ndarray
    branch: Branch
    index: int
    n_samples: int
    n_feasible: int


def psi_grid(ik_map, plan: SamplePlan) -> np.ndarray:
    """All grid points (rows) in lexicographic order."""
    axes = [lo + (hi - lo) * np.arange(r) / r for (lo, hi), r in zip(ik_map.psi_ranges(), plan.resolutions(ik_map.n_psi))]
    if not axes:
        return np.zeros((1, 0))
    return np.array(list(itertools.product(*axes)), dtype=float)


def sample_ik(problem: IKProblem, plan: SamplePlan | None = None) -> SampleResult | None:
    """Cheapest feasible grid point, or ``None`` if no grid point is feasible.

    Only full pose targets are supported: the pose is the target and the
    grid spans the self-motion parameters.  Ties go to the lowest index.
    """
    if problem.target_mode != "full":
        raise ValueError("sampling needs a full pose target")
    plan = plan or SamplePlan()
    ik = ik_map_for(problem.chain)
    checker = build_old(problem)
    grid = psi_grid(ik, plan)
    best = None
    index = 0
    n_feasible = 0
    for branch in plan.branch_set(ik):
        for psi in grid:
            res = ik.solve(problem.target, psi, branch)
            i = index
            index += 1
            if res.clipped or np.min(res.probe_values) < 0:
                continue
            q = res.q_value
            if checker.max_violation(q) > RECHECK_TOL:
                continue
            n_feasible += 1
            cost = float(problem.cost(q)) if problem.cost is not None else 0.0
            if best is None or cost < best[0]:
                best = (cost, q, psi.copy(), branch, i)
    if best is None:
        return None
    cost, q, psi, branch, i = best
    return SampleResult(q, cost, psi, branch, i, index, n_feasible)


__all__ = ["SamplePlan", "SampleResult", "psi_grid", "sample_ik", "RECHECK_TOL"]
