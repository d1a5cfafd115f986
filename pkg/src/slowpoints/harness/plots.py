"""SVG figures.  The hash salt is fixed and the date stamp dropped so the
files are reproducible byte for byte on one platform."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "slowpoints"


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def survival_plot(records, path):
    """``p_hat`` against ``R`` on log-log axes, one line per threshold."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for th in sorted({r.theta for r in records}):
        rs = sorted((r for r in records if r.theta == th and r.hits > 0), key=lambda r: r.ratio)
        if not rs:
            continue
        x = [r.ratio for r in rs]
        y = [r.p_hat for r in rs]
        lo = [r.p_hat - r.ci[0] for r in rs]
        hi = [r.ci[1] - r.p_hat for r in rs]
        ax.errorbar(x, y, yerr=[lo, hi], marker="o", ms=3, capsize=2, label=f"theta={th:g}")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("R = b/a")
    ax.set_ylabel("survival probability")
    ax.legend(fontsize=7)
    return _save(fig, path)


def lambda_plot(curve, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    if curve.entries:
        ax.errorbar(curve.thetas, curve.lambdas, yerr=2 * curve.ses, marker="o", ms=3,
                    capsize=2, label="fit (2 se)")
    for d, fits in getattr(curve, "density_fits", {}).items():
        if fits:
            ax.plot([f.theta for f in fits], [f.lambda_hat for f in fits], "s--", ms=3,
                    label=f"{d} per octave")
    ax.axhline(0.5, color="grey", lw=0.8, ls=":")
    if curve.theta_c_hat is not None:
        ax.axvline(curve.theta_c_hat, color="grey", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("theta")
    ax.set_ylabel("lambda")
    ax.legend(fontsize=7)
    return _save(fig, path)


def census_plot(census, est, path, predicted=None):
    """``log2 N_n`` against ``n`` with the fitted line and the reference slope."""
    fig, ax = plt.subplots(figsize=(5, 4))
    n = census.levels
    c = np.asarray(census.counts, dtype=float)
    pos = c > 0
    ax.plot(n[pos], np.log2(c[pos]), "o", ms=3, label="census")
    if est is not None:
        lo, hi = est.level_range
        x = np.arange(lo, hi + 1)
        y = np.log2(c[lo:hi + 1])
        b = y.mean() - est.raw_slope * x.mean()
        ax.plot(x, b + est.raw_slope * x, "-", label=f"fit {est.raw_slope:.3f}")
        if predicted is not None:
            ax.plot(x, y.mean() + predicted * (x - x.mean()), ":",
                    label=f"1 - 2 lambda = {predicted:.3f}")
    ax.set_xlabel("level n")
    ax.set_ylabel("log2 occupied boxes")
    ax.legend(fontsize=7)
    return _save(fig, path)


def profile_plot(profile, path, label="L2 norm"):
    fig, ax = plt.subplots(figsize=(5, 4))
    m = profile.l2 > 0
    ax.errorbar(profile.times[m], profile.l2[m], yerr=2 * profile.l2_se[m], marker="o",
                ms=3, capsize=2, label=label)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.legend(fontsize=7)
    return _save(fig, path)
