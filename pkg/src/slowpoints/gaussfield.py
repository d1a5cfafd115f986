"""Exact sampling of ``t -> H(t, 0)`` on finite time grids.

The process is Gaussian with covariance :func:`~slowpoints.kernels.cov_h_temporal`,
so a Cholesky factor of the grid covariance matrix turns standard normals
into exact draws.  No circulant embedding or truncated expansions are used.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _rng
from .errors import DomainError, NumericalError
from .kernels import cov_h_temporal, var_h

#: largest grid accepted by :func:`factor_covariance`
MAX_GRID_SIZE = 8192
JITTER_LADDER = (1e-12, 1e-10)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing positive evaluation times.

    ``spacing`` is ``"geometric"`` (with ``points_per_octave``) or
    ``"custom"``.
    """

    times: np.ndarray
    spacing: str = "custom"
    points_per_octave: int | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise DomainError("need at least one time", param="times")
        if not np.all(t > 0):
            raise DomainError("times must be positive", param="times")
        if np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing", param="times")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return self.times.size

    @property
    def ratio(self) -> float:
        return float(self.times[-1] / self.times[0])


def build_grid(a, b, points_per_octave=32) -> TimeGrid:
    """Geometric grid from ``a`` to ``b`` inclusive.

    The number of intervals is ``ceil(points_per_octave * log2(b/a))`` (the
    rounding absorbs float noise when ``b/a`` is a power of two), so both
    endpoints are hit exactly.
    """
    if not a > 0:
        raise DomainError(f"must be > 0, got {a!r}", param="a")
    if not b >= a:
        raise DomainError(f"must be >= a, got {b!r}", param="b")
    if int(points_per_octave) < 1:
        raise DomainError("must be >= 1", param="points_per_octave")
    d = int(points_per_octave)
    if b == a:
        return TimeGrid(np.array([float(a)]), "geometric", d)
    octaves = math.log2(b / a)
    n = max(1, math.ceil(d * octaves - 1e-9))
    times = a * (b / a) ** (np.arange(n + 1) / n)
    times[0], times[-1] = a, b
    return TimeGrid(times, "geometric", d)


@dataclass(frozen=True)
class CovFactor:
    grid: TimeGrid
    lower_factor: np.ndarray
    jitter_applied: float = 0.0

    def covariance(self) -> np.ndarray:
        return covariance_matrix(self.grid)

    def reproduction_error(self) -> float:
        """``max|L L^T - M| / max|M|``."""
        m = self.covariance()
        r = self.lower_factor @ self.lower_factor.T
        return float(np.max(np.abs(r - m)) / np.max(np.abs(m)))


def covariance_matrix(grid: TimeGrid) -> np.ndarray:
    t = grid.times
    return cov_h_temporal(t[:, None], t[None, :])


def factor_covariance(grid: TimeGrid, max_size=MAX_GRID_SIZE) -> CovFactor:
    """Cholesky factor of the covariance of ``H(., 0)`` on ``grid``.

    Falls back to diagonal jitter of ``1e-12`` then ``1e-10`` times the
    largest variance when the plain factorization fails.
    """
    if len(grid) > max_size:
        raise DomainError(f"grid has {len(grid)} points, cap is {max_size}", param="grid")
    m = covariance_matrix(grid)
    scale = float(np.max(np.diag(m)))
    for jitter in (0.0,) + JITTER_LADDER:
        try:
            low = linalg.cholesky(m + jitter * scale * np.eye(len(grid)), lower=True)
        except linalg.LinAlgError:
            continue
        return CovFactor(grid, low, jitter * scale)
    eig = np.linalg.eigvalsh(m)
    raise NumericalError(
        "covariance factorization failed after maximum jitter",
        {"size": len(grid), "min_eig": float(eig[0]), "max_eig": float(eig[-1]),
         "condition": float(eig[-1] / max(eig[0], np.finfo(float).tiny))},
    )


@dataclass
class PathBatch:
    grid: TimeGrid
    values: np.ndarray
    seed_provenance: _rng.Seed = field(default_factory=lambda: _rng.Seed(0, 0))

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]


def sample_paths(factor: CovFactor, n_paths, seed) -> PathBatch:
    """Draw ``n_paths`` independent realizations; rows are paths."""
    if int(n_paths) < 1:
        raise DomainError("must be >= 1", param="n_paths")
    seed = _rng.as_seed(seed)
    z = _rng.generator(seed).standard_normal((int(n_paths), len(factor.grid)))
    return PathBatch(factor.grid, z @ factor.lower_factor.T, seed)


def normalized_running_max(values, times):
    """Running maximum over the grid of ``|H(t)| / t^(1/4)``, path by path.

    A path survives the band of half-width ``theta * t^(1/4)`` up to grid
    index ``k`` iff ``running_max[:, k] <= theta``.
    """
    r = np.abs(values) / np.asarray(times) ** 0.25
    return np.maximum.accumulate(r, axis=-1)


def survival_indicator(batch: PathBatch, theta) -> np.ndarray:
    """True for paths with ``|H(t_k)| <= theta t_k^(1/4)`` at every grid point."""
    if not theta > 0:
        raise DomainError("must be > 0", param="theta")
    r = np.abs(batch.values) / batch.grid.times ** 0.25
    return np.all(r <= theta, axis=1)


def scaling_check(c, grid: TimeGrid) -> float:
    """Largest deviation from ``Cov(ct, cs) = sqrt(c) Cov(t, s)`` over grid pairs."""
    if not c > 0:
        raise DomainError("must be > 0", param="c")
    t = grid.times
    lhs = cov_h_temporal(c * t[:, None], c * t[None, :])
    rhs = math.sqrt(c) * cov_h_temporal(t[:, None], t[None, :])
    return float(np.max(np.abs(lhs - rhs)))


def scaling_tolerance(c, grid: TimeGrid) -> float:
    return 1e-10 * math.sqrt(c) * float(var_h(grid.times[-1]))
