r"""Heat kernel and second moments of the linearized field ``H``.

``H`` solves the additive stochastic heat equation
:math:`\partial_t H = \partial_x^2 H + \dot W` from zero initial data, so it
is a centered Gaussian field whose covariance is an integral over the heat
kernel :math:`G_s(y) = (4\pi s)^{-1/2} e^{-y^2/4s}`.  This module evaluates
that covariance in closed form, the second moments of the spatially
localized field ``H_alpha`` (noise restricted to a window of half-width
``t**((1 - alpha)/2)`` around ``x``), and the standard bound on the mean
squared localization error.

Closed form of the covariance
-----------------------------
With ``w = t + s - 2r`` and then ``v = sqrt(w)``,

.. math::

    \mathrm{Cov}[H(t,x), H(s,y)]
      = \frac{1}{2\sqrt\pi}\int_{\sqrt{|t-s|}}^{\sqrt{t+s}} e^{-b^2/v^2}\,dv,
    \qquad b = |x-y|/2,

and :math:`\int e^{-b^2/v^2}dv = v e^{-b^2/v^2} - b\sqrt\pi\,\mathrm{erfc}(b/v)`.
The antiderivative is evaluated as ``exp(-z**2) * v * g(z)`` with
``z = b/v`` and ``g(z) = 1 - sqrt(pi) z erfcx(z)``, which never forms the
difference of two nearly equal exponentially small numbers.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError

SQRT_PI = math.sqrt(math.pi)

#: quadrature tolerance used for the localized moments and for oracles
QUAD_EPSABS = 1e-12


@dataclass(frozen=True)
class KernelQuery:
    """Two space-time points ``(t, x)`` and ``(s, y)`` with ``t, s > 0``."""

    t: float
    x: float
    s: float
    y: float

    def __post_init__(self):
        _check_positive("t", self.t)
        _check_positive("s", self.s)

    def cov(self) -> float:
        return cov_h(self.t, self.x, self.s, self.y)


@dataclass(frozen=True)
class LocalizationQuery:
    t: float
    alpha: float

    def __post_init__(self):
        _check_positive("t", self.t)
        _check_alpha(self.alpha)

    @property
    def half_width(self) -> float:
        """Half-width ``t**((1 - alpha)/2)`` of the noise window."""
        return self.t ** ((1.0 - self.alpha) / 2.0)


def _check_positive(name, value):
    if not np.all(np.asarray(value) > 0):
        raise DomainError(f"must be > 0, got {value!r}", param=name)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"must lie in (0, 1), got {alpha!r}", param="alpha")


def heat_kernel(s, y):
    """Heat kernel ``G_s(y) = (4 pi s)^(-1/2) exp(-y^2 / 4s)``.

    Broadcasts over array arguments.
    """
    _check_positive("s", s)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.exp(-(y * y) / (4.0 * s)) / np.sqrt(4.0 * np.pi * s)
    return out[()] if out.ndim == 0 else out


def var_h(t):
    """Variance ``sqrt(t / (2 pi))`` of ``H(t, x)``; zero at ``t = 0``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise DomainError(f"must be >= 0, got {t!r}", param="t")
    out = np.sqrt(t_arr / (2.0 * np.pi))
    return out[()] if out.ndim == 0 else out


def cov_h_temporal(t, s):
    """Covariance of ``H(t, x)`` and ``H(s, x)`` at a common site.

    Equals ``(sqrt(t+s) - sqrt|t-s|) / (2 sqrt(pi))``; evaluated in the
    rationalized form ``min(t,s) / (sqrt(pi) (sqrt(t+s) + sqrt|t-s|))``
    so that nearby times do not cancel.  Broadcasts over arrays.
    """
    _check_positive("t", t)
    _check_positive("s", s)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    out = np.minimum(t, s) / (SQRT_PI * (np.sqrt(t + s) + np.sqrt(np.abs(t - s))))
    return out[()] if out.ndim == 0 else out


def _g(z):
    """``1 - sqrt(pi) z erfcx(z)`` for ``z >= 0``, accurate for large ``z``."""
    if z < 8.0:
        return 1.0 - SQRT_PI * z * special.erfcx(z)
    # asymptotic series sum_{n>=1} (-1)^(n+1) (2n-1)!! / (2 z^2)^n
    q = 1.0 / (2.0 * z * z)
    term, total = q, q
    for n in range(2, 24):
        term *= -(2 * n - 1) * q
        total += term
    return total


def cov_h_scaled(t, x, s, y):
    """Covariance split as ``(log_scale, mantissa)``.

    ``cov_h(t, x, s, y) == exp(log_scale) * mantissa``.  The mantissa stays
    representable even when the covariance itself underflows (large spatial
    separation at small times), which lets callers compare values in
    relative terms across the whole domain.
    """
    _check_positive("t", t)
    _check_positive("s", s)
    b = abs(x - y) / 2.0
    v2 = math.sqrt(t + s)
    v1 = math.sqrt(abs(t - s))
    if b == 0.0:
        return 0.0, 2.0 * min(t, s) / (v2 + v1) / (2.0 * SQRT_PI)
    z2 = b / v2
    m = v2 * _g(z2)
    if v1 > 0.0:
        z1 = b / v1
        m -= v1 * _g(z1) * math.exp(z2 * z2 - z1 * z1)
    return -z2 * z2, m / (2.0 * SQRT_PI)


def cov_h(t, x, s, y) -> float:
    """``Cov[H(t, x), H(s, y)]`` in closed form.

    Symmetric under ``(t, x) <-> (s, y)`` and equal to :func:`var_h` on the
    diagonal.  Returns a clean non-negative number (possibly 0.0 after
    underflow) for arbitrarily large separations.
    """
    log_scale, mantissa = cov_h_scaled(t, x, s, y)
    return math.exp(log_scale) * mantissa


def cov_h_quad(t, x, s, y, epsabs=QUAD_EPSABS, scaled=False):
    """Adaptive quadrature of the defining covariance integral.

    Independent of the closed form; used as an oracle.  With ``scaled=True``
    the integrand is multiplied by ``exp(|x-y|^2 / 4(t+s))`` and the result
    is comparable to the mantissa of :func:`cov_h_scaled`.
    """
    _check_positive("t", t)
    _check_positive("s", s)
    a2 = (x - y) ** 2
    shift = a2 / (4.0 * (t + s)) if scaled else 0.0

    def f(r):
        w = t + s - 2.0 * r
        return math.exp(shift - a2 / (4.0 * w)) / math.sqrt(4.0 * math.pi * w)

    # the integrand has a sqrt singularity at r = s when t == s
    val, _ = integrate.quad(f, 0.0, min(s, t), epsabs=epsabs, epsrel=1e-13, limit=500)
    return val


def localization_l2(t, alpha) -> float:
    r"""Mean squared error ``E|H(t,x) - H_alpha(t,x)|^2``.

    Equals ``var_h(t) - var_h_alpha(t, alpha)`` because the two pieces of
    the stochastic integral are independent.  Computed directly from the
    complementary window,

    .. math:: \int_0^{\sqrt t} \mathrm{erfc}\big(w / (\sqrt2\,\rho)\big)
              \frac{d\rho}{\sqrt{2\pi}},

    (substitution ``v = rho**2`` in the time integral), so that it keeps full
    relative accuracy when it is far below the rounding level of ``var_h``.
    """
    q = LocalizationQuery(t, alpha)
    w = q.half_width
    c = w / math.sqrt(2.0)

    def f(rho):
        return special.erfc(c / rho) if rho > 0 else 0.0

    # erfc(c/rho) is negligible below rho ~ c/27; start there to help quad
    lo = min(c / 27.0, math.sqrt(t))
    val, _ = integrate.quad(f, lo, math.sqrt(t), epsabs=0.0, epsrel=1e-12, limit=200)
    return val / math.sqrt(2.0 * math.pi)


def var_h_alpha(t, alpha) -> float:
    r"""Variance of the localized field ``H_alpha(t, x)``.

    ``int_0^t erf(w / sqrt(2v)) / sqrt(8 pi v) dv`` with
    ``w = t**((1 - alpha)/2)``.  Since ``erf = 1 - erfc`` this is
    ``var_h(t)`` minus :func:`localization_l2`; the complementary form is the
    one integrated numerically.
    """
    return float(var_h(t)) - localization_l2(t, alpha)


def localization_bound(t, alpha) -> float:
    """Upper bound ``2 sqrt(t/pi) exp(-1 / (4 t^alpha))`` on the localization error."""
    LocalizationQuery(t, alpha)
    return 2.0 * math.sqrt(t / math.pi) * math.exp(-1.0 / (4.0 * t**alpha))


def increment_variance(t, eps):
    """``E|H(t+eps, x) - H(t, x)|^2`` from the closed-form moments.

    ``var_h(t+eps) + var_h(t) - 2 cov`` simplifies to
    ``(sqrt(eps) - d) / sqrt(pi)`` with a small positive correction ``d``
    written without subtraction, so large ``t`` does not cancel.  The value
    increases from ``sqrt(eps / 2pi)`` at ``t = 0`` towards ``sqrt(eps / pi)``.
    """
    _check_positive("eps", eps)
    if t < 0:
        raise DomainError(f"must be >= 0, got {t!r}", param="t")
    a = math.sqrt(t + eps) + math.sqrt(t)
    d = (eps * eps / 4.0) / ((math.sqrt(t * (t + eps)) + t + eps / 2.0)
                             * (a / math.sqrt(2.0) + math.sqrt(2.0 * t + eps)))
    return (math.sqrt(eps) - d) / SQRT_PI
