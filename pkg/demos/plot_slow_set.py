"""
Counting boxes on a slow set
============================

First calibrate the box-counting estimator on a middle-thirds Cantor set,
then simulate the equation on ``[0, 1]`` and count dyadic boxes hit by the
sites whose normalized excursion ``|u - 1| / t^(1/4)`` stayed below
``|sigma(1)| theta`` over a window of times.  At desk scale this is a
finite-resolution proxy, so the comparison with ``1 - 2 lambda`` is
exploratory.
"""

import math

import matplotlib
matplotlib.use("Agg")

from slowpoints import gaussfield, slowset, spde
from slowpoints.harness import plots

cantor = slowset.cantor_points(8)
cen = slowset.box_census(cantor)
est = slowset.dim_fit(cen)
print("Cantor counts:", cen.counts)
print(f"fitted {est.slope:.4f} on levels {est.level_range}; exact {math.log(2) / math.log(3):.4f}")

###############################################################################
# A small slow-set run: one replica, 8 checkpoints per octave in [2^-16, 2^-6]

sigma = spde.SigmaSpec.default_bounded()
grid = gaussfield.build_grid(2.0**-16, 2.0**-6, 8)
probe = spde.SpdeConfig(sigma, grid, half_width=1e9, dx=2.0**-10, analysis_window=(0.0, 1.0))
cfg = spde.SpdeConfig(sigma, grid, half_width=probe.required_half_width(), dx=2.0**-10,
                      replicas=1, analysis_window=(0.0, 1.0), seed=(3, 0))
fs = spde.simulate_field(cfg, (2.0**-16, 2.0**-6))

theta, lam = 1.2, 0.44  # lambda_hat(1.2) from the exponent module at 1e5 trials
rep = slowset.slowset_report(fs, theta, lam)
c = rep.censuses[0]
print("slow sites:", c.n_points, " counts:", c.counts)
if rep.estimates[0] is None:
    print("dimension fit refused:", rep.refusals)
else:
    e, cmp = rep.estimates[0], rep.comparisons[0]
    print(f"box dimension {e.slope:.3f} +- {e.se:.3f} on levels {e.level_range}; "
          f"1 - 2 lambda = {cmp.predicted:.3f}")
    plots.census_plot(c, e, "census.svg", cmp.predicted)
    print("wrote census.svg")
