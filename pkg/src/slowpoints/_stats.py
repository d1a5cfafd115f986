"""Small statistical helpers shared by the estimators."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


def wilson_interval(hits, trials, level=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return (0.0, 1.0)
    z = stats.norm.ppf(0.5 + level / 2.0)
    p = hits / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # rounding can push the limits past p at hits = 0 or hits = trials
    return (max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half)))


def batch_mean_se(x, n_batches=20, axis=0):
    """Mean and batch-means standard error along ``axis``.

    Replicas are split into ``n_batches`` contiguous groups (fewer if there
    are not enough replicas); the standard error is the spread of the group
    means divided by ``sqrt(n_batches)``.
    """
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    n = x.shape[0]
    b = max(2, min(n_batches, n))
    groups = np.array_split(x, b, axis=0)
    means = np.stack([g.mean(axis=0) for g in groups])
    return x.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(b)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    r_squared: float


def weighted_line_fit(x, y, weights=None) -> LineFit:
    """Weighted least squares ``y ~ intercept + slope * x``.

    ``weights`` are inverse variances.  The reported slope error is the
    model-based one inflated by the reduced chi-square when that exceeds one.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    n = x.size
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    intercept = ym - slope * xm
    resid = y - intercept - slope * x
    ss_res = (w * resid**2).sum()
    ss_tot = (w * (y - ym) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if weights is None:
        var = ss_res / max(n - 2, 1) / sxx
    else:
        chi2 = ss_res / max(n - 2, 1)
        var = max(1.0, chi2) / sxx
    return LineFit(float(slope), float(intercept), float(math.sqrt(max(var, 0.0))), float(r2))
