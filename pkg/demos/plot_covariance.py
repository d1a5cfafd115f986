"""
Covariance of the linearized field
==================================

The additive-noise field ``H`` started from zero has an explicit
space-time covariance.  We evaluate it, check it against direct
quadrature, and look at how fast the spatially localized field
converges to it.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from slowpoints import kernels

# Variance at a single site grows like t^(1/2)
for t in (0.01, 1.0, 4.0):
    print(f"var_h({t}) = {kernels.var_h(t):.6f}   sqrt(t / 2 pi) = {np.sqrt(t / (2 * np.pi)):.6f}")

###############################################################################
# Closed form against quadrature of the defining integral, on the scaled
# (log-scale, mantissa) representation so far-tail values stay comparable.

for t, s, d in [(1.0, 0.5, 0.3), (1e-3, 1e-3, 4.0), (2.0, 1.0, 0.0)]:
    log_scale, mant = kernels.cov_h_scaled(t, 0.0, s, d)
    q = kernels.cov_h_quad(t, 0.0, s, d, scaled=True)
    print(f"t={t:<6g} s={s:<6g} |x-y|={d:<4g}  log scale {log_scale:10.3f}  "
          f"mantissa {mant:.12g}  quad {q:.12g}")

###############################################################################
# Temporal correlation at one site: corr(H(t), H(1)) as t varies

ts = np.geomspace(1e-3, 1e3, 200)
corr = kernels.cov_h_temporal(ts, 1.0) / np.sqrt(kernels.var_h(ts) * kernels.var_h(1.0))

###############################################################################
# Localization: error of the windowed field and its bound

alphas = (0.25, 0.5, 0.75)
tl = np.geomspace(1e-3, 0.1, 30)

fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
ax[0].semilogx(ts, corr)
ax[0].set_xlabel("t")
ax[0].set_ylabel("corr(H(t,0), H(1,0))")
for a in alphas:
    l2 = [kernels.localization_l2(t, a) for t in tl]
    bd = [kernels.localization_bound(t, a) for t in tl]
    line, = ax[1].loglog(tl, np.maximum(l2, 1e-300), label=f"alpha={a}")
    ax[1].loglog(tl, bd, "--", color=line.get_color())
ax[1].set_ylim(1e-60, 1)
ax[1].set_xlabel("t")
ax[1].set_ylabel("E|H - H_alpha|^2 (dashed: bound)")
ax[1].legend()
fig.tight_layout()
fig.savefig("covariance.svg")
print("wrote covariance.svg")
