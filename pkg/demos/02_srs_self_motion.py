"""Self-motion of a 7-DoF SRS arm and the reachability probes.

Sweeping the arm angle psi moves the elbow on a circle while the hand stays
put.  Pushing the target beyond reach turns the elbow probe negative and
the IK map reports that it clipped its arccos argument.
"""
import numpy as np

from ikform.analytic_ik import Branch, ik_map_for
from ikform.geometry import Pose3, pose_distance
from ikform.kinematics import forward_kinematics, scaled_arm

arm = scaled_arm(0)
ik = ik_map_for(arm)
target = forward_kinematics(arm, np.array([0.2, 0.9, -0.3, 1.3, 0.4, -0.7, 0.1])).numeric()
branch = Branch((1, 1, 1))

print("psi    elbow probe   pose error    q")
for psi in np.linspace(0, 2 * np.pi, 7, endpoint=False):
    res = ik.solve(target, np.array([psi]), branch)
    err = pose_distance(forward_kinematics(arm, res.q_value), target)
    print(f"{psi:4.2f}   {res.probe_values[0]:10.6f}   {err:9.1e}   {np.round(res.q_value, 2)}")

print("\nstretching the target along its own direction:")
for scale in (1.0, 1.3, 1.6, 2.0):
    far = Pose3(target.position * scale, target.rotation)
    res = ik.solve(far, np.array([0.0]), branch)
    print(f"scale {scale:.1f}: min probe {res.probe_values.min():+.4f}, clipped={res.clipped}")
