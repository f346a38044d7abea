"""A small version of the 3D redundancy-scaling experiment.

Ten FK-generated targets per arm size, feasibility only, both formulations
from matched initial configurations.  The full matrix is available through
``ikform bench 3d``.
"""
from ikform.bench import emit, run_3d_scaling, success_rates

records = run_3d_scaling((0, 4), targets_per_n=10, seed=1, mode="feasibility", source="fk",
                         methods=("old", "new", "sampling"))
for (exp, n, method), rate in success_rates(records).items():
    print(f"{n:2d} joints  {method:<8}  success {rate:.2f}")
print()
print(emit(records[:6]), end="")
