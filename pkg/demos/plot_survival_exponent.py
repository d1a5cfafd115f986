"""
Boundary-crossing exponent of the Gaussian field
================================================

Sample ``H(t, 0)`` exactly on a geometric time grid and estimate the
probability that it stays inside the band ``+-theta t^(1/4)`` over
``[1, R]``.  The decay in ``R`` is a power law whose exponent
``lambda(theta)`` controls the size of the slow set; ``theta_c`` is where
it crosses 1/2.
"""

import matplotlib
matplotlib.use("Agg")

from slowpoints import exponent
from slowpoints.harness import plots

# a modest budget: thresholds with too few survivors are refused, not guessed
curve = exponent.lambda_curve([0.8, 1.0, 1.2, 1.4, 1.7, 2.0], budget=60_000, seed=1)

for e in curve.entries:
    print(f"theta={e.theta:<4}  lambda_hat={e.lambda_hat:.4f} +- {e.se:.4f}  R^2={e.r_squared:.4f}")
for theta, info in curve.refusals.items():
    print(f"theta={theta:<4}  refused, hits per R: {info['hits']}")

###############################################################################
# The same paths thinned to 16 points per octave miss some excursions, so
# the coarse grid reports a smaller exponent.

for f in curve.density_fits[16]:
    print(f"density 16: theta={f.theta:<4} lambda_hat={f.lambda_hat:.4f}")

print("theta_c estimate:", curve.theta_c_hat, curve.theta_c_interval or curve.theta_c_note)
print("monotone:", curve.monotone_ok, " convex:", curve.convex_ok)

plots.survival_plot(curve.records, "survival.svg")
plots.lambda_plot(curve, "lambda.svg")
print("wrote survival.svg, lambda.svg")
