"""
Deviation radius and variance decay
===================================

Two checks on the error bounds. First, every Method 3 replication stays
inside the radius ``L_H / (1 - rho) * sum_k L_k max ||delta_k||`` built from
its own offsets. Second, the largest posterior variance shrinks like a power
of the fill distance.
"""

# %%
import numpy as np

from gpcouple.bench import build_benchmark_problem
from gpcouple.bounds import (calibrate_constant, empirical_coverage, estimate_offset_sensitivity,
                             estimate_post_map_constant, linspace_ladder, variance_decay_slope)
from gpcouple.coupling import estimate_contraction
from gpcouple.kernels import ScalarKernel

setup = build_benchmark_problem(20)
prob = setup.problem
probes = np.linspace(0, 1, 5)
L = estimate_offset_sensitivity(prob, probes)
L_H = estimate_post_map_constant(prob, probes)
rho = estimate_contraction(prob, np.linspace(0, 1, 1001), domain=[(0.0, 1.0)])
print(f"L = {np.round(L, 6)}, L_H = {L_H:.6f}, rho of the surrogate map = {rho:.3f}")

# %%
# Coverage is a deterministic inequality per replication, so it must be 1.
# Halving the radius shows how much room the bound leaves.
for scale in (1.0, 0.5):
    res = empirical_coverage(prob, 500, 1, L_H, rho, L, radius_scale=scale)
    print(f"radius x{scale}: coverage {res.fraction:.3f}, largest deviation/radius "
          f"{np.max(res.deviations / res.radii):.3f}")

# %%
# Variance decay on nested equispaced designs. Matern 5/2 in one dimension
# has the theoretical exponent 5; Matern 3/2 has 3.
for family in ("Matern52", "Matern32"):
    k = ScalarKernel(family, 0.25, 1.0)
    res = variance_decay_slope(k, linspace_ladder([10, 20, 40, 80]))
    C, h0 = calibrate_constant(k, linspace_ladder([10, 20, 40, 80]))
    print(f"{family}: slope {res.slope:.2f} (theory {res.theory:.0f}), calibrated C={C:.4g} valid for h <= {h0:.3f}")
    for n, h, v in zip(res.n, res.h, res.sup_var):
        print(f"   n={n:3d}  h={h:.4f}  sup variance={v:.3e}")
