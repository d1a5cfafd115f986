"""
How good is the Gaussian approximation?
=======================================

Run the nonlinear equation and its linearization on the same noise and
measure ``E(t) = u(t,0) - 1 - sigma(1) H(t,0)``.  The error is of smaller
order than ``t^(1/4)``, the size of ``H`` itself, which is what lets the
Gaussian exponent describe slow points of ``u``.
"""

import matplotlib
matplotlib.use("Agg")
import numpy as np

from slowpoints import spde
from slowpoints.harness import plots

sigma = spde.SigmaSpec.default_bounded()
checkpoints = tuple(2.0**-k for k in range(12, 3, -1))
probe = spde.SpdeConfig(sigma, checkpoints, half_width=1e9, dx=0.01)
cfg = spde.SpdeConfig(sigma, checkpoints, half_width=probe.required_half_width(), dx=0.01,
                      seed=(11, 0))
print(f"sigma: {sigma.catalog_id}, dx={cfg.dx}, dt={cfg.dt:.3g}, half width {cfg.half_width:.3f}")

runs = spde.run_ensemble(cfg, 400, shard_size=200)
prof = spde.linearization_profile(runs)

print(" t          ||E||_2      ||E||_2 / t^(1/4)")
for t, v, r in zip(prof.times, prof.l2, prof.ratio_to_quarter):
    print(f" {t:.3e}  {v:.4e}   {r:.4f}")
print(f"log-log slope {prof.slope:.3f} +- {prof.slope_se:.3f}")

###############################################################################
# With constant sigma the coupling is exact: u = 1 + c H to rounding.

c = -0.8
lin = spde.SpdeConfig(spde.SigmaSpec.constant(c), checkpoints,
                      half_width=probe.required_half_width(), dx=0.01, replicas=20)
run = spde.run_coupled(lin)
print("constant sigma, max |u - 1 - cH| =", np.max(np.abs(run.series_u - 1 - c * run.series_h)))

plots.profile_plot(prof, "linearization.svg", "linearization error")
print("wrote linearization.svg")
