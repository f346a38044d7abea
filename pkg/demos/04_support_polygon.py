"""Static stability as a support-polygon containment constraint.

The centre of mass must project into the convex hull of the contact
points.  The inequality encoding takes the best triangle slack over all
triangles of contact points; the equality encoding asks for convex-combination
weights.  Both are compared with a half-plane hull test.
"""
import numpy as np

from ikform.bench import oracle_label, run_stability_toy, stability_agreement
from ikform.constraints import SupportPoints, hull_distance, stability_margin

feet = SupportPoints(np.array([[0.0, 0.0], [0.3, 0.0], [0.3, 0.2], [0.0, 0.2], [0.15, -0.05]]))
for com in ([0.1, 0.1], [0.15, -0.02], [0.35, 0.1]):
    hard = stability_margin(com, feet, beta=None)
    soft = stability_margin(com, feet)
    print(f"com {com}: hard margin {hard:+.4f}, smoothed {soft:+.4f}, "
          f"hull distance {hull_distance(com, feet.points):+.4f} ({oracle_label(feet.points, com)})")

records = run_stability_toy(seed=0, trials=40)
print("\nagreement with the hull oracle over 40 random trials:", stability_agreement(records))
