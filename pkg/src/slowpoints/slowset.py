"""Discretized slow points and their box-counting dimension.

A site ``x`` is slow at threshold ``theta`` when
``max_t |u(t,x) - 1| / t^(1/4) <= |sigma(1)| theta`` over a finite window of
checkpoints (the ``t -> 0`` limsup is not computable).  The detected sites
are mapped into ``[0, 1]`` and counted in dyadic boxes; the growth rate of the
counts is compared with ``1 - 2 lambda(theta)``.  The comparison is
exploratory: a finite-resolution census cannot certify an almost-sure
small-time statement.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._stats import weighted_line_fit
from .errors import DomainError, InsufficientDataError

log = logging.getLogger(__name__)

MIN_COUNT = 10
MIN_LEVELS = 3


@dataclass(frozen=True)
class PointSet:
    """Finite set of points of ``[0, 1]`` with native spacing ``resolution``."""

    points: np.ndarray
    resolution: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.unique(np.asarray(self.points, dtype=float).ravel())
        if p.size and (p[0] < 0 or p[-1] > 1):
            raise DomainError("points must lie in [0, 1]", param="points")
        if not self.resolution > 0:
            raise DomainError("must be > 0", param="resolution")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return self.points.size

    def issubset(self, other: "PointSet") -> bool:
        return bool(np.isin(self.points, other.points).all())

    @property
    def max_level(self) -> int:
        """Deepest dyadic level resolvable at this spacing."""
        return int(math.floor(math.log2(1.0 / self.resolution) + 1e-9))


@dataclass(frozen=True)
class SlowSetCensus:
    """Occupied dyadic boxes per level, ``counts[n]`` for ``n = 0..n_max``.

    Boxes are ``[j/2^n, (j+1)/2^n)`` with the point ``1`` assigned to the
    last box.
    """

    counts: tuple
    n_points: int = 0

    @property
    def levels(self) -> np.ndarray:
        return np.arange(len(self.counts))

    @property
    def n_max(self) -> int:
        return len(self.counts) - 1

    def nesting_ok(self) -> bool:
        c = self.counts
        return all(a <= b <= 2 * a for a, b in zip(c, c[1:]))

    def to_dict(self):
        return {"counts": list(self.counts), "n_points": self.n_points}


@dataclass(frozen=True)
class DimensionEstimate:
    """Least-squares slope of ``log2 counts`` on level, clamped to ``[0, 1]``."""

    slope: float
    raw_slope: float
    se: float
    level_range: tuple
    r_squared: float

    def to_dict(self):
        return dict(self.__dict__, level_range=list(self.level_range))


def detect_slow(field_stats, theta, sigma_at_one=None, replica=0, interval=(0.0, 1.0)):
    """Sites whose window statistic is at most ``|sigma(1)| theta``.

    Parameters
    ----------
    field_stats : FieldStatistic or tuple
        Output of :func:`slowpoints.spde.simulate_field`, or a pair
        ``(positions, statistic)`` of 1-d arrays.
    sigma_at_one : float, optional
        Defaults to the value carried by ``field_stats``.
    interval : (lo, hi)
        Reference interval mapped affinely onto ``[0, 1]``; sites outside it
        (the boundary buffer) are ignored.
    """
    if isinstance(field_stats, tuple):
        pos, stat = (np.asarray(a, dtype=float) for a in field_stats)
        spacing = float(np.min(np.diff(pos))) if pos.size > 1 else 1.0
    else:
        pos = np.asarray(field_stats.positions, dtype=float)
        stat = np.asarray(field_stats.stat_u)[replica]
        spacing = field_stats.dx
        if sigma_at_one is None:
            sigma_at_one = field_stats.sigma_at_one
    if sigma_at_one is None:
        raise DomainError("sigma_at_one is required for raw arrays", param="sigma_at_one")
    lo, hi = interval
    inside = (pos >= lo - 1e-12) & (pos <= hi + 1e-12)
    keep = inside & (stat <= abs(sigma_at_one) * theta)
    pts = np.clip((pos[keep] - lo) / (hi - lo), 0.0, 1.0)
    return PointSet(pts, spacing / (hi - lo),
                    {"theta": float(theta), "sites": int(inside.sum())})


def box_census(points: PointSet, n_max=None) -> SlowSetCensus:
    """Exact dyadic occupancy counts at levels ``0..n_max``."""
    deepest = points.max_level
    n_max = deepest if n_max is None else int(n_max)
    if n_max < 0:
        raise DomainError("must be >= 0", param="n_max")
    if n_max > deepest:
        raise DomainError(f"level {n_max} finer than resolution allows ({deepest})",
                          param="n_max")
    p = points.points
    counts = []
    for n in range(n_max + 1):
        if p.size == 0:
            counts.append(0)
            continue
        boxes = np.minimum(np.floor(p * 2.0**n), 2**n - 1)
        counts.append(int(np.unique(boxes).size))
    return SlowSetCensus(tuple(counts), int(p.size))


def admissible_levels(census: SlowSetCensus, min_count=MIN_COUNT):
    """Levels that are neither sparse nor saturated.

    Saturated means more than half of the ``2^n`` boxes occupied, or the
    count already equal to the number of points (every point isolated).
    """
    out = []
    for n, c in zip(census.levels, census.counts):
        if c >= min_count and c <= 2 ** (n - 1) and c < census.n_points:
            out.append(int(n))
    return out


def _longest_run(levels):
    best, cur = [], []
    for n in levels:
        cur = cur + [n] if cur and n == cur[-1] + 1 else [n]
        if len(cur) > len(best):
            best = cur
    return best


def dim_fit(census: SlowSetCensus, level_range=None, min_count=MIN_COUNT) -> DimensionEstimate:
    """Slope of ``log2 counts[n]`` against ``n``.

    With an explicit ``level_range = (n_lo, n_hi)`` every level in the range
    is used.  Otherwise the longest run of admissible levels is selected and
    at least three are required.
    """
    if level_range is None:
        run = _longest_run(admissible_levels(census, min_count))
        if len(run) < MIN_LEVELS:
            raise InsufficientDataError(
                "fewer than three admissible census levels", {"census": census.to_dict()})
        lo, hi = run[0], run[-1]
    else:
        lo, hi = (int(v) for v in level_range)
        if not 0 <= lo < hi <= census.n_max:
            raise DomainError(f"invalid level range {level_range}", param="level_range")
    n = np.arange(lo, hi + 1)
    c = np.asarray(census.counts[lo:hi + 1], dtype=float)
    if np.any(c <= 0):
        raise InsufficientDataError("empty levels in range", {"census": census.to_dict()})
    fit = weighted_line_fit(n, np.log2(c))
    return DimensionEstimate(float(min(1.0, max(0.0, fit.slope))), fit.slope, fit.slope_se,
                             (lo, hi), fit.r_squared)


@dataclass
class DimensionComparison:
    theta: float | None
    dimension: float
    dimension_se: float
    lambda_hat: float
    lambda_se: float
    predicted: float
    predicted_se: float
    gap: float
    gap_se: float
    predicts_empty: bool
    above_threshold: bool | None
    note: str = "exploratory: finite-window, finite-resolution proxy for a small-time statement"

    def to_dict(self):
        return dict(self.__dict__)


def dimension_vs_theory(est: DimensionEstimate, lam, lam_se=0.0, theta=None,
                        theta_c=None) -> DimensionComparison:
    """Compare the fitted dimension with ``1 - 2 lambda``.

    ``lam`` is an :class:`~slowpoints.exponent.ExponentFit` or a number.
    When ``lambda > 1/2`` the prediction is an empty set and the predicted
    dimension is reported as 0.
    """
    if hasattr(lam, "lambda_hat"):
        theta = lam.theta if theta is None else theta
        lam_se = lam.se
        lam = lam.lambda_hat
    lam = float(lam)
    raw = 1.0 - 2.0 * lam
    predicts_empty = raw < 0
    pred = max(0.0, raw)
    pred_se = 2.0 * float(lam_se)
    above = None
    if theta is not None and theta_c is not None:
        above = bool(theta >= theta_c)
    return DimensionComparison(
        theta=None if theta is None else float(theta), dimension=est.slope, dimension_se=est.se,
        lambda_hat=lam, lambda_se=float(lam_se), predicted=pred, predicted_se=pred_se,
        gap=est.slope - pred, gap_se=math.hypot(est.se, pred_se),
        predicts_empty=predicts_empty, above_threshold=above)


def cantor_points(level):
    """Left endpoints of the ``2^level`` intervals of the middle-thirds construction."""
    if int(level) < 0:
        raise DomainError("must be >= 0", param="level")
    pts = np.zeros(1)
    for k in range(1, int(level) + 1):
        pts = np.concatenate([pts, pts + 2.0 / 3.0**k])
    return PointSet(pts, 3.0 ** -int(level))


@dataclass
class SlowSetReport:
    """Per-replica censuses and dimension comparisons for one threshold."""

    theta: float
    window: tuple
    censuses: list
    estimates: list
    comparisons: list
    refusals: list
    fractions: list

    def to_dict(self):
        return {
            "theta": self.theta, "window": list(self.window),
            "censuses": [c.to_dict() for c in self.censuses],
            "estimates": [None if e is None else e.to_dict() for e in self.estimates],
            "comparisons": [None if c is None else c.to_dict() for c in self.comparisons],
            "refusals": self.refusals, "fractions": self.fractions,
        }


def slowset_report(field_stats, theta, lam, theta_c=None, n_max=None, level_range=None):
    """Detect, count and compare, replica by replica (never pooled)."""
    censuses, ests, comps, refusals, fracs = [], [], [], [], []
    for i in range(np.asarray(field_stats.stat_u).shape[0]):
        ps = detect_slow(field_stats, theta, replica=i)
        cen = box_census(ps, n_max)
        censuses.append(cen)
        fracs.append(len(ps) / max(ps.meta["sites"], 1))
        try:
            est = dim_fit(cen, level_range)
        except InsufficientDataError as exc:
            refusals.append({"replica": i, "reason": str(exc)})
            ests.append(None)
            comps.append(None)
            continue
        ests.append(est)
        comps.append(dimension_vs_theory(est, lam, theta=theta, theta_c=theta_c))
    return SlowSetReport(float(theta), tuple(field_stats.window), censuses, ests, comps,
                         refusals, fracs)
