r"""Finite-difference simulation of :math:`\partial_t u = \partial_x^2 u + \sigma(u)\dot W`.

The scheme is explicit Euler in time with the centred second difference in
space; the white noise enters a cell of width ``dx`` over a step ``dt`` as
``sqrt(dt/dx) * xi`` with ``xi`` standard normal.  Three fields share one
noise array per step:

* ``u``     -- the solution started from ``u(0) = 1``,
* ``ubar``  -- the solution with ``sigma`` frozen outside ``[-2, 2]``,
* ``h``     -- the additive field (``sigma = 1``) started from zero,

so the linearization error ``E = u - 1 - sigma(1) h`` and the truncation gap
``u - ubar`` are observed path by path.  Boundary cells are pinned (``u`` and
``ubar`` at 1, ``h`` at 0) and the domain is made wide enough that the pinning
cannot reach the analysed sites within the horizon.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from . import _rng
from ._stats import batch_mean_se, weighted_line_fit
from .errors import DomainError, InsufficientDataError, NumericalError
from .gaussfield import TimeGrid

_CONSTANT, _LINEAR, _BOUNDED_SIN = 0, 1, 2
_KIND_NAMES = {_CONSTANT: "constant", _LINEAR: "linear", _BOUNDED_SIN: "bounded_sin"}

DEFAULT_ALPHA = 0.5
MIN_REPLICAS = 100


@dataclass(frozen=True)
class SigmaSpec:
    """A nonlinearity from the catalog.

    ``constant(c)``: ``c``; ``linear(m, k)``: ``m x + k``;
    ``bounded_sin(c0, c1)``: ``c0 + c1 sin x``.  ``lo``/``hi`` clamp the
    argument, which is how ``clamped(base, lo, hi)`` is represented.
    """

    kind: int
    p0: float
    p1: float = 0.0
    lo: float = -math.inf
    hi: float = math.inf

    @classmethod
    def constant(cls, c):
        return cls(_CONSTANT, float(c))

    @classmethod
    def linear(cls, m, k=0.0):
        return cls(_LINEAR, float(m), float(k))

    @classmethod
    def bounded_sin(cls, c0, c1):
        return cls(_BOUNDED_SIN, float(c0), float(c1))

    @classmethod
    def default_bounded(cls, c1=1.0):
        """``c0 + c1 sin x`` with ``c0`` chosen so that ``sigma(1) = 1``."""
        return cls.bounded_sin(1.0 - c1 * math.sin(1.0), c1)

    @classmethod
    def clamped(cls, base, lo, hi):
        if not lo < hi:
            raise DomainError("need lo < hi", param="sigma.lo")
        return replace(base, lo=max(base.lo, float(lo)), hi=min(base.hi, float(hi)))

    def truncated(self):
        """The bounded surrogate that agrees with ``self`` on ``[-2, 2]``."""
        return SigmaSpec.clamped(self, -2.0, 2.0)

    def __call__(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        if self.kind == _CONSTANT:
            return np.full_like(x, self.p0)[()]
        if self.kind == _LINEAR:
            return (self.p0 * x + self.p1)[()]
        return (self.p0 + self.p1 * np.sin(x))[()]

    @property
    def sigma_at_one(self) -> float:
        return float(self(1.0))

    @property
    def lipschitz(self) -> float:
        if self.kind == _CONSTANT:
            return 0.0
        return abs(self.p0) if self.kind == _LINEAR else abs(self.p1)

    @property
    def bound(self):
        """Sup norm, or ``None`` when unbounded."""
        if self.kind == _CONSTANT:
            return abs(self.p0)
        if self.kind == _BOUNDED_SIN:
            return abs(self.p0) + abs(self.p1)
        if math.isfinite(self.lo) and math.isfinite(self.hi):
            return max(abs(self(self.lo)), abs(self(self.hi)))
        return None

    @property
    def catalog_id(self) -> str:
        name = _KIND_NAMES[self.kind]
        if self.kind == _CONSTANT:
            s = f"constant({self.p0!r})"
        elif self.kind == _LINEAR:
            s = f"linear({self.p0!r}, {self.p1!r})"
        else:
            s = f"{name}({self.p0!r}, {self.p1!r})"
        if math.isfinite(self.lo) or math.isfinite(self.hi):
            s = f"clamped({s}, {self.lo!r}, {self.hi!r})"
        return s

    def to_dict(self):
        return {"kind": _KIND_NAMES[self.kind], "p0": self.p0, "p1": self.p1,
                "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d):
        kinds = {v: k for k, v in _KIND_NAMES.items()}
        if d["kind"] not in kinds:
            raise DomainError(f"unknown kind {d['kind']!r}", param="sigma.kind")
        return cls(kinds[d["kind"]], float(d.get("p0", 0.0)), float(d.get("p1", 0.0)),
                   float(d.get("lo", -math.inf)), float(d.get("hi", math.inf)))


@numba.njit(cache=True, nogil=True)
def _sig(kind, p0, p1, lo, hi, v):
    if v < lo:
        v = lo
    elif v > hi:
        v = hi
    if kind == 0:
        return p0
    elif kind == 1:
        return p0 * v + p1
    return p0 + p1 * math.sin(v)


@numba.njit(cache=True, nogil=True)
def _advance(cur, nxt, xi, r, a, kind, p0, p1, lo, hi):
    """One explicit step of a single field; returns False on non-finite output."""
    nrep, n = cur.shape
    acc = 0.0
    for i in range(nrep):
        nxt[i, 0] = cur[i, 0]
        nxt[i, n - 1] = cur[i, n - 1]
        for j in range(1, n - 1):
            c = cur[i, j]
            v = c + r * (cur[i, j + 1] - 2.0 * c + cur[i, j - 1]) \
                + _sig(kind, p0, p1, lo, hi, c) * (a * xi[i, j - 1])
            nxt[i, j] = v
            acc += v
    return math.isfinite(acc)


@numba.njit(cache=True, nogil=True)
def _advance_pair(u, un, h, hn, xi, r, a, kind, p0, p1, lo, hi):
    """Step ``u`` (with sigma) and ``h`` (sigma = 1) in one pass over the noise."""
    nrep, n = u.shape
    acc = 0.0
    for i in range(nrep):
        un[i, 0] = u[i, 0]
        un[i, n - 1] = u[i, n - 1]
        hn[i, 0] = h[i, 0]
        hn[i, n - 1] = h[i, n - 1]
        for j in range(1, n - 1):
            z = a * xi[i, j - 1]
            c = u[i, j]
            v = c + r * (u[i, j + 1] - 2.0 * c + u[i, j - 1]) + _sig(kind, p0, p1, lo, hi, c) * z
            un[i, j] = v
            d = h[i, j]
            w = d + r * (h[i, j + 1] - 2.0 * d + h[i, j - 1]) + z
            hn[i, j] = w
            acc += v + w
    return math.isfinite(acc)


@numba.njit(cache=True, nogil=True)
def _any_outside(x, lo, hi):
    nrep, n = x.shape
    for i in range(nrep):
        for j in range(n):
            if x[i, j] < lo or x[i, j] > hi:
                return True
    return False


def step(u, noise, sigma: SigmaSpec, dx, dt):
    """Advance a field by one explicit step.

    ``u`` has shape ``(..., n)``; the first and last cells are boundary
    cells and are left unchanged.  ``noise`` holds standard normals for the
    ``n - 2`` interior cells.
    """
    if not dt <= dx * dx / 2.0:
        raise DomainError(f"stability: dt={dt} exceeds dx^2/2={dx * dx / 2}", param="dt")
    u = np.asarray(u, dtype=float)
    c = u[..., 1:-1]
    lap = u[..., 2:] - 2.0 * c + u[..., :-2]
    out = u.copy()
    out[..., 1:-1] = c + (dt / dx**2) * lap + sigma(c) * (math.sqrt(dt / dx) * noise)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite field after step", {"step": 0})
    return out


@dataclass(frozen=True)
class SpdeConfig:
    """Discretization and experiment parameters for one batch of replicas.

    ``dt`` defaults to ``dx**2 / 4``; ``horizon`` defaults to the last
    checkpoint.  Sites listed in ``tracked_sites`` (or every grid site in
    ``analysis_window``) have their values recorded at each checkpoint.
    """

    sigma: SigmaSpec
    checkpoints: tuple
    half_width: float
    dx: float
    dt: float | None = None
    horizon: float | None = None
    replicas: int = 1
    seed: tuple = (0, 0)
    tracked_sites: tuple = (0.0,)
    analysis_window: tuple | None = None
    alpha: float = DEFAULT_ALPHA
    boundary: str = "dirichlet_one"

    def __post_init__(self):
        cps = self.checkpoints.times if isinstance(self.checkpoints, TimeGrid) else self.checkpoints
        cps = tuple(float(t) for t in cps)
        object.__setattr__(self, "checkpoints", cps)
        object.__setattr__(self, "seed", _rng.as_seed(self.seed))
        if not self.dx > 0:
            raise DomainError("must be > 0", param="dx")
        if self.dt is None:
            object.__setattr__(self, "dt", self.dx * self.dx / 4.0)
        if not self.dt > 0:
            raise DomainError("must be > 0", param="dt")
        if self.dt > self.dx * self.dx / 4.0 * (1 + 1e-12):
            raise DomainError(
                f"stability: dt={self.dt!r} exceeds dx^2/4={self.dx * self.dx / 4!r}", param="dt")
        if not cps or any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] <= 0:
            raise DomainError("checkpoints must be positive and strictly increasing",
                              param="checkpoints")
        if self.horizon is None:
            object.__setattr__(self, "horizon", cps[-1])
        if cps[-1] > self.horizon * (1 + 1e-12):
            raise DomainError("checkpoints must lie in (0, horizon]", param="checkpoints")
        if self.boundary != "dirichlet_one":
            raise DomainError(f"unsupported boundary {self.boundary!r}", param="boundary")
        if not 0 < self.alpha < 1:
            raise DomainError("must lie in (0, 1)", param="alpha")
        if int(self.replicas) < 1:
            raise DomainError("must be >= 1", param="replicas")
        if self.sigma.sigma_at_one == 0.0:
            raise DomainError("sigma(1) must be non-zero", param="sigma")
        if self.analysis_window is not None:
            lo, hi = self.analysis_window
            if not lo < hi:
                raise DomainError("need lo < hi", param="analysis_window")
        need = self.required_half_width()
        if self.half_width < need * (1 - 1e-12):
            raise DomainError(
                f"half_width={self.half_width!r} below the boundary buffer {need!r}",
                param="half_width")

    def required_half_width(self) -> float:
        """``reach + 3 sqrt(T) + T^((1-alpha)/2)`` where ``reach`` is the largest tracked |x|."""
        reach = max((abs(x) for x in self.tracked_sites), default=0.0)
        if self.analysis_window is not None:
            reach = max(reach, abs(self.analysis_window[0]), abs(self.analysis_window[1]))
        t = self.horizon
        return reach + 3.0 * math.sqrt(t) + t ** ((1.0 - self.alpha) / 2.0)

    @property
    def n_half(self) -> int:
        """Number of cells between the origin and the boundary."""
        return int(math.ceil(self.half_width / self.dx - 1e-9))

    @property
    def positions(self) -> np.ndarray:
        k = self.n_half
        return np.arange(-k, k + 1) * self.dx

    def site_indices(self) -> np.ndarray:
        """Grid indices of the tracked sites (window sites first, in order)."""
        pos = self.positions
        if self.analysis_window is not None:
            lo, hi = self.analysis_window
            idx = np.nonzero((pos >= lo - 1e-12) & (pos <= hi + 1e-12))[0]
        else:
            idx = np.array([int(np.argmin(np.abs(pos - x))) for x in self.tracked_sites])
        return idx

    def checkpoint_steps(self):
        """Step indices of the checkpoints and their snap distances."""
        steps = np.maximum(1, np.rint(np.asarray(self.checkpoints) / self.dt)).astype(np.int64)
        if np.any(np.diff(steps) <= 0):
            raise DomainError("two checkpoints snap to the same step; reduce dt",
                              param="checkpoints")
        snap = np.abs(steps * self.dt - np.asarray(self.checkpoints))
        return steps, snap

    def to_dict(self):
        return {
            "sigma": self.sigma.to_dict(), "sigma_catalog_id": self.sigma.catalog_id,
            "checkpoints": list(self.checkpoints), "half_width": self.half_width,
            "dx": self.dx, "dt": self.dt, "horizon": self.horizon,
            "replicas": int(self.replicas), "seed": list(self.seed),
            "tracked_sites": list(self.tracked_sites),
            "analysis_window": None if self.analysis_window is None else list(self.analysis_window),
            "alpha": self.alpha, "boundary": self.boundary,
        }


@dataclass
class CoupledRun:
    """Checkpointed values of ``u``, ``ubar`` and ``h`` at the tracked sites.

    Series arrays have shape ``(replicas, checkpoints, sites)``.
    ``sup_error`` holds the running maximum over all time steps of the
    linearization error ``|E|`` up to each checkpoint.
    """

    config: SpdeConfig
    times: np.ndarray
    sites: np.ndarray
    series_u: np.ndarray
    series_ubar: np.ndarray
    series_h: np.ndarray
    sup_error: np.ndarray
    snap_distance: np.ndarray = field(default_factory=lambda: np.zeros(0))
    clamp_step: int | None = None

    @property
    def linearization_error(self) -> np.ndarray:
        s1 = self.config.sigma.sigma_at_one
        return self.series_u - 1.0 - s1 * self.series_h

    @property
    def replicas(self) -> int:
        return self.series_u.shape[0]

    def origin_index(self) -> int:
        return int(np.argmin(np.abs(self.sites)))


def run_coupled(config: SpdeConfig) -> CoupledRun:
    """Evolve ``u``, ``ubar`` and ``h`` on shared noise up to the horizon."""
    steps, snap = config.checkpoint_steps()
    n_steps = int(steps[-1])
    nrep = int(config.replicas)
    n = 2 * config.n_half + 1
    r = config.dt / config.dx**2
    a = math.sqrt(config.dt / config.dx)
    sg = config.sigma
    tb = sg.truncated()
    idx = config.site_indices()
    s1 = sg.sigma_at_one

    rng = _rng.generator(config.seed)
    u, u_n = np.ones((nrep, n)), np.empty((nrep, n))
    h, h_n = np.zeros((nrep, n)), np.empty((nrep, n))
    ub = ub_n = None
    xi = np.empty((nrep, n - 2))

    k = len(steps)
    out_u = np.empty((nrep, k, idx.size))
    out_ub = np.empty_like(out_u)
    out_h = np.empty_like(out_u)
    out_sup = np.empty_like(out_u)
    running = np.zeros((nrep, idx.size))
    clamp_step = None
    ci = 0
    for it in range(1, n_steps + 1):
        if ub is None and _any_outside(u, tb.lo, tb.hi):
            ub, ub_n = u.copy(), np.empty_like(u)
            clamp_step = it - 1
        rng.standard_normal(out=xi)
        ok = _advance_pair(u, u_n, h, h_n, xi, r, a, sg.kind, sg.p0, sg.p1, sg.lo, sg.hi)
        if ub is not None:
            ok &= _advance(ub, ub_n, xi, r, a, tb.kind, tb.p0, tb.p1, tb.lo, tb.hi)
            ub, ub_n = ub_n, ub
        if not ok:
            raise NumericalError(f"non-finite field at step {it}", {"step": it})
        u, u_n = u_n, u
        h, h_n = h_n, h
        np.maximum(running, np.abs(u[:, idx] - 1.0 - s1 * h[:, idx]), out=running)
        if it == steps[ci]:
            out_u[:, ci] = u[:, idx]
            out_ub[:, ci] = (u if ub is None else ub)[:, idx]
            out_h[:, ci] = h[:, idx]
            out_sup[:, ci] = running
            ci += 1
    return CoupledRun(
        config=config, times=steps * config.dt, sites=config.positions[idx],
        series_u=out_u, series_ubar=out_ub, series_h=out_h, sup_error=out_sup,
        snap_distance=snap, clamp_step=clamp_step,
    )


def run_ensemble(config: SpdeConfig, n_replicas, shard_size=250, workers=1):
    """Run ``n_replicas`` replicas in shards with independent streams.

    Shard ``i`` uses seed ``child(config.seed, "shard", i)`` so results do not
    depend on ``workers`` or scheduling.
    """
    n_replicas = int(n_replicas)
    sizes = [shard_size] * (n_replicas // shard_size)
    if n_replicas % shard_size:
        sizes.append(n_replicas % shard_size)
    cfgs = [replace(config, replicas=m, seed=_rng.child(config.seed, "shard", i))
            for i, m in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run_coupled, cfgs))
    return [run_coupled(c) for c in cfgs]


def _stack(runs, attr):
    runs = list(runs)
    if not runs:
        raise InsufficientDataError("no runs supplied")
    t0 = runs[0].times
    for r in runs[1:]:
        if not np.array_equal(r.times, t0):
            raise DomainError("runs have different checkpoints", param="runs")
    o = runs[0].origin_index()
    return t0, np.concatenate([getattr(r, attr)[:, :, o] for r in runs], axis=0)


@dataclass
class NormProfile:
    """Per-checkpoint L2 norms with batch standard errors and a log-log slope."""

    times: np.ndarray
    l2: np.ndarray
    l2_se: np.ndarray
    slope: float
    slope_se: float
    fit_mask: np.ndarray
    replicas: int
    sup_mean: np.ndarray | None = None
    sup_se: np.ndarray | None = None

    @property
    def ratio_to_quarter(self) -> np.ndarray:
        """``l2 / t^(1/4)``."""
        return self.l2 / self.times**0.25


def _l2_profile(times, x, t_range, n_batches):
    m2, m2_se = batch_mean_se(x**2, n_batches)
    l2 = np.sqrt(m2)
    with np.errstate(divide="ignore", invalid="ignore"):
        l2_se = np.where(l2 > 0, m2_se / (2 * l2), 0.0)
    mask = l2 > 1e-300
    if t_range is not None:
        mask &= (times >= t_range[0] * (1 - 1e-9)) & (times <= t_range[1] * (1 + 1e-9))
    slope = slope_se = math.nan
    if mask.sum() >= 3:
        rel = np.maximum(l2_se[mask] / l2[mask], 1e-12)
        fit = weighted_line_fit(np.log(times[mask]), np.log(l2[mask]), 1.0 / rel**2)
        slope, slope_se = fit.slope, fit.slope_se
    return l2, l2_se, slope, slope_se, mask


def linearization_profile(runs, t_range=None, n_batches=20) -> NormProfile:
    """``||E(t,0)||_2`` and ``E sup_{s<=t} |E(s,0)|`` per checkpoint.

    The slope is a weighted fit of ``log ||E(t,0)||_2`` against ``log t``
    over checkpoints in ``t_range`` (all by default).
    """
    runs = list(runs)
    times, u = _stack(runs, "series_u")
    _, h = _stack(runs, "series_h")
    _, sup = _stack(runs, "sup_error")
    if u.shape[0] < MIN_REPLICAS:
        raise InsufficientDataError(
            f"{u.shape[0]} replicas; at least {MIN_REPLICAS} needed", {"replicas": u.shape[0]})
    s1 = runs[0].config.sigma.sigma_at_one
    err = u - 1.0 - s1 * h
    l2, l2_se, slope, slope_se, mask = _l2_profile(times, err, t_range, n_batches)
    sup_mean, sup_se = batch_mean_se(sup, n_batches)
    return NormProfile(times, l2, l2_se, slope, slope_se, mask, u.shape[0], sup_mean, sup_se)


def truncation_profile(runs, t_range=None, n_batches=20) -> NormProfile:
    """``||u(t,0) - ubar(t,0)||_2`` per checkpoint with its log-log slope.

    Checkpoints where the gap is exactly zero in every replica (the clamp
    has not yet reached the origin) are excluded from the fit; see
    ``fit_mask``.
    """
    runs = list(runs)
    times, u = _stack(runs, "series_u")
    _, ub = _stack(runs, "series_ubar")
    if u.shape[0] < MIN_REPLICAS:
        raise InsufficientDataError(
            f"{u.shape[0]} replicas; at least {MIN_REPLICAS} needed", {"replicas": u.shape[0]})
    l2, l2_se, slope, slope_se, mask = _l2_profile(times, u - ub, t_range, n_batches)
    return NormProfile(times, l2, l2_se, slope, slope_se, mask, u.shape[0])


@dataclass
class FieldStatistic:
    """``max_{t in window} |u(t,x) - 1| / t^(1/4)`` for every analysed site.

    ``stat_u`` and ``stat_h`` have shape ``(replicas, sites)``; ``stat_h``
    is the same statistic for the additive field ``h``.
    """

    positions: np.ndarray
    stat_u: np.ndarray
    stat_h: np.ndarray
    window: tuple
    times_used: np.ndarray
    sigma_at_one: float
    dx: float


def window_statistic(series, times, window, center=0.0):
    """Max over checkpoints inside ``window`` of ``|series - center| / t^(1/4)``.

    ``series`` has the checkpoint axis second: ``(replicas, checkpoints, sites)``.
    """
    times = np.asarray(times)
    lo, hi = window
    sel = (times >= lo * (1 - 1e-9)) & (times <= hi * (1 + 1e-9))
    if not sel.any():
        raise DomainError(f"no checkpoint inside window {window}", param="theta_window")
    w = times[sel] ** 0.25
    return np.max(np.abs(series[:, sel] - center) / w[None, :, None], axis=1), times[sel]


def simulate_field(config: SpdeConfig, theta_window) -> FieldStatistic:
    """Simulate and reduce to one slow-growth statistic per site."""
    lo, hi = theta_window
    if not 0 < lo <= hi <= config.horizon * (1 + 1e-12):
        raise DomainError(f"window {theta_window} not inside (0, horizon]", param="theta_window")
    run = run_coupled(config)
    su, used = window_statistic(run.series_u, run.times, theta_window, 1.0)
    sh, _ = window_statistic(run.series_h, run.times, theta_window, 0.0)
    return FieldStatistic(run.sites, su, sh, (lo, hi), used, config.sigma.sigma_at_one, config.dx)
