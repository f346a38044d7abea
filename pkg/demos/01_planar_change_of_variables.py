"""A six-link planar arm solved in joint space and through its analytic IK.

The joint-space program searches over all six angles with a nonlinear pose
equality.  The IK program searches over (pose, psi) where psi holds the
first three angles; the last three come from the closed-form 3R solution,
so the pose equality becomes a linear row.
"""
import numpy as np

from ikform.analytic_ik import ik_map_for
from ikform.formulation import CostSpec, IKProblem, build_new, build_old, new_initial_guess
from ikform.geometry import Pose2
from ikform.kinematics import PlanarChain, planar_fk
from ikform.solver import solve

chain = PlanarChain(6)
target = Pose2(0.45, 0.3, 0.8)
problem = IKProblem(chain, target, cost=CostSpec())
ik = ik_map_for(chain)

q0 = np.array([0.3, -0.6, 1.0, 0.4, -0.2, 0.5])
x0, branch = new_initial_guess(q0, ik)
print(f"initial configuration {np.round(q0, 3)}")
print(f"same point in IK variables (x, y, theta, psi...) {np.round(x0, 3)}, branch {branch}")

for name, prog, start in (("joint space", build_old(problem), q0), ("analytic IK", build_new(problem, branch), x0)):
    res = solve(prog, start)
    q = prog.to_joints(res.x_star)
    tip = planar_fk(chain, q)
    print(f"\n{name}: {res.status} after {res.outer_iterations} outer / {res.inner_iterations_total} inner iterations")
    print(f"  cost q^T q = {res.cost:.4f}")
    print(f"  tip = ({tip.x:.6f}, {tip.y:.6f}, {tip.theta:.6f})  target = ({target.x}, {target.y}, {target.theta})")
    if prog.linear.any():
        ev = prog.evaluate(res.x_star, derivatives=False)
        print(f"  linear pose rows residual {prog.violation(ev.c, prog.linear):.1e}")
