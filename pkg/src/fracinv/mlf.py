"""Two-parameter Mittag-Leffler function on the real line.

``E_{a,b}(z) = sum_k z^k / Gamma(a*k + b)`` is evaluated by one of three
branches, chosen per argument:

* Taylor series (compensated summation) while its cancellation condition
  stays below ``1e-12`` relative,
* the asymptotic expansion ``sum_{k>=1} (-1)^(k+1) x^-k / Gamma(b - a*k)`` for
  ``E_{a,b}(-x)`` when the first neglected term is below ``1e-14`` relative,
* otherwise a quadrature of the real-axis Laplace representation
  (collapsed Hankel contour), with the recurrence
  ``E_{a,b}(z) = 1/Gamma(b) + z*E_{a,a+b}(z)`` used to bring ``b`` down
  to at most 1.

Large positive arguments are rejected. Set ``FRACINV_DEBUG_ML=1`` to log the
branch chosen for every evaluation batch.
"""

from __future__ import annotations

import functools
import logging
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfcx, gammaln, gammasgn, rgamma

from . import _backend
from .errors import ConvergenceError, DomainError, SeriesOverflowError

log = logging.getLogger(__name__)

_DEBUG = os.environ.get("FRACINV_DEBUG_ML", "") not in ("", "0")

SERIES, ASYMPTOTIC, QUADRATURE, CLOSED_FORM = "series", "asymptotic", "quadrature", "closed"

_SERIES_COND = 1e-12 / 2.2e-16  # allowed ratio sum|t_k| / |sum t_k|
_ASYM_RTOL = 1e-14
_ASYM_TERMS = 80
# series is never attempted past this value of x**(1/alpha); cancellation
# would cost ~exp(40) there
_SERIES_XMAX_ROOT = 40.0
# positive arguments: result ~ exp(z**(1/alpha)); beyond this it overflows
POSITIVE_LIMIT_ROOT = 600.0
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class MlParams:
    """Orders of ``E_{alpha,beta}``.

    ``completely_monotone`` flags the regime ``beta >= alpha`` where
    ``E(-x)`` is nonnegative and nonincreasing for ``x >= 0``.
    """

    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0) or not math.isfinite(self.alpha):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not math.isfinite(self.beta):
            raise DomainError(f"beta must be finite, got {self.beta}")

    @property
    def completely_monotone(self) -> bool:
        return self.beta >= self.alpha


@functools.lru_cache(maxsize=256)
def _series_coefficients(alpha: float, beta: float, nterms: int):
    k = np.arange(nterms, dtype=np.float64)
    arg = alpha * k + beta
    sign = gammasgn(arg)
    with np.errstate(over="ignore"):
        logc = -gammaln(arg)
    pole = (arg <= 0) & (arg == np.round(arg))
    sign = np.where(pole, 0.0, sign)
    logc = np.where(pole, -np.inf, logc)
    logc.setflags(write=False)
    sign.setflags(write=False)
    return logc, sign


def _nterms_for(alpha: float, xmax: float) -> int:
    root = xmax ** (1.0 / alpha) if xmax > 0 else 0.0
    return int((3.0 * root + 60.0) / alpha) + 20


def _series(alpha, beta, z):
    xmax = float(np.max(np.abs(z))) if z.size else 0.0
    logc, sign = _series_coefficients(alpha, beta, _nterms_for(alpha, xmax))
    return _backend.series_eval(z, logc, sign)


def _asymptotic(alpha, beta, x):
    """Asymptotic expansion of ``E_{a,b}(-x)``; returns values and error estimates.

    Coefficients ``1/Gamma(b - a*k)`` oscillate through zeros, so truncation
    uses the envelope ``Gamma(1 - b + a*k)/pi`` (reflection formula) rather
    than the raw terms, which can be deceptively small next to a pole.
    """
    k = np.arange(1, _ASYM_TERMS + 1, dtype=np.float64)
    arg = beta - alpha * k
    coef = rgamma(arg)
    log_env = np.where(arg > 0, -gammaln(np.maximum(arg, 1e-300)), gammaln(1.0 - arg) - math.log(math.pi))
    lx = np.log(x)[:, None]
    env = log_env[None, :] - k[None, :] * lx
    cut = np.argmin(env, axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = np.where(k % 2 == 1, 1.0, -1.0)[None, :] * coef[None, :] * np.exp(-k[None, :] * lx)
    keep = np.arange(_ASYM_TERMS)[None, :] < cut[:, None]
    values = np.where(keep, terms, 0.0).sum(axis=1)
    err = np.exp(np.take_along_axis(env, cut[:, None], axis=1)[:, 0])
    return values, err


@functools.lru_cache(maxsize=200_000)
def _laplace_quad(alpha: float, beta: float, x: float) -> float:
    """``E_{a,b}(-x)`` for ``x > 0``, ``0 < a < 1``, ``b <= 1`` by quadrature.

    Integrand after the substitution ``r = u**(1/a)`` on the collapsed Hankel
    contour::

        (1/(a*pi)) exp(-u**(1/a)) u**((1-b)/a)
            * (u sin(b pi) + x sin((b-a) pi)) / (u^2 + 2 x u cos(a pi) + x^2)
    """
    sb = math.sin(beta * math.pi)
    s2 = math.sin((beta - alpha) * math.pi)
    ca = math.cos(alpha * math.pi)
    p = (1.0 - beta) / alpha
    inv_a = 1.0 / alpha
    scale = 1.0 / (alpha * math.pi)

    def core(u):
        return scale * math.exp(-(u**inv_a)) * (u * sb + x * s2) / (u * u + 2.0 * x * u * ca + x * x)

    def full(u):
        return u**p * core(u)

    umax = 45.0**alpha
    peak = -x * ca
    opts = dict(limit=400, epsabs=0.0, epsrel=1e-13)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if p >= 0.0:
            pts = [peak] if 0.0 < peak < umax else None
            val, err = integrate.quad(full, 0.0, umax, points=pts, **opts)
        else:
            split = min(umax, 1.0, peak / 2.0 if peak > 0.0 else umax)
            v1, e1 = integrate.quad(core, 0.0, split, weight="alg", wvar=(p, 0.0), **opts)
            pts = [peak] if split < peak < umax else None
            v2, e2 = integrate.quad(full, split, umax, points=pts, **opts)
            val, err = v1 + v2, e1 + e2
    if not math.isfinite(val) or err > 1e-9 * max(abs(val), 1e-300):
        raise ConvergenceError(
            f"quadrature for E_{{{alpha},{beta}}}(-{x}) did not converge (err={err:.2e})"
        )
    return val


@functools.lru_cache(maxsize=20_000)
def _alpha_one_quad(beta: float, x: float) -> float:
    """``E_{1,b}(-x) = (1/Gamma(b-1)) int_0^1 exp(-x s) (1-s)^(b-2) ds`` for ``b > 1``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            lambda s: math.exp(-x * s), 0.0, 1.0, weight="alg", wvar=(0.0, beta - 2.0),
            limit=400, epsabs=0.0, epsrel=1e-13,
        )
    return val * float(rgamma(beta - 1.0))


def _bridge(alpha: float, beta: float, x: float) -> float:
    """Quadrature branch, reducing ``beta`` by the recurrence when needed."""
    if alpha == 1.0:
        if beta > 1.0:
            return _alpha_one_quad(beta, x)
        return float(rgamma(beta)) - x * _bridge(1.0, beta + 1.0, x)
    if alpha == 0.5 and beta in (0.5, 1.0):
        # E_{1/2,1}(-x) = erfcx(x) and E_{1/2,1/2}(-x) = 1/sqrt(pi) - x erfcx(x)
        e = float(erfcx(x))
        return e if beta == 1.0 else _INV_SQRT_PI - x * e
    # the representation is valid up to b < 1 + a, but near that edge the
    # integrand becomes an ill-conditioned 0 * inf product at u = 0
    if beta <= 1.0:
        return _laplace_quad(alpha, beta, x)
    # E_{a,b}(-x) = (1/Gamma(b-a) - E_{a,b-a}(-x)) / x
    return (float(rgamma(beta - alpha)) - _bridge(alpha, beta - alpha, x)) / x


def _alpha_one(beta, z, out, branch):
    """``alpha = 1``: elementary closed forms for integer ``beta``."""
    n = int(round(beta))
    todo = np.ones(z.shape, dtype=bool)
    if beta == n and n >= 1:
        big = np.abs(z) >= 1.0
        if n == 1:
            big[:] = True
        zb = z[big]
        partial = np.zeros_like(zb)
        term = np.ones_like(zb)
        for k in range(n - 1):
            partial += term
            term = term * zb / (k + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[big] = (np.exp(zb) - partial) / zb ** (n - 1) if n > 1 else np.exp(zb)
        branch[big] = CLOSED_FORM
        todo &= ~big
    return todo


def _evaluate(params: MlParams, z):
    alpha, beta = float(params.alpha), float(params.beta)
    z = np.asarray(z, dtype=np.float64)
    scalar = z.ndim == 0
    z = np.atleast_1d(z).ravel()
    if not np.all(np.isfinite(z)):
        raise DomainError("Mittag-Leffler argument must be finite")
    pos = z > 0
    if np.any(pos) and np.max(z[pos]) ** (1.0 / alpha) > POSITIVE_LIMIT_ROOT:
        raise SeriesOverflowError(
            f"positive argument {np.max(z[pos]):.3g} beyond the series-stability threshold"
        )
    out = np.full(z.shape, np.nan)
    branch = np.full(z.shape, "", dtype=object)
    todo = np.ones(z.shape, dtype=bool)

    if alpha == 1.0:
        todo = _alpha_one(beta, z, out, branch)

    x = -z
    # asymptotic first for large negative arguments: cheapest when it applies
    cand = todo & (x >= 1.0)
    if np.any(cand):
        vals, err = _asymptotic(alpha, beta, x[cand])
        ok = err <= _ASYM_RTOL * np.abs(vals)
        idx = np.flatnonzero(cand)[ok]
        out[idx] = vals[ok]
        branch[idx] = ASYMPTOTIC
        todo[idx] = False

    cand = todo & ((np.abs(z) ** (1.0 / alpha) <= _SERIES_XMAX_ROOT) | pos)
    if np.any(cand):
        vals, asum = _series(alpha, beta, z[cand])
        ok = (asum <= _SERIES_COND * np.abs(vals)) | pos[cand] | (asum == 0.0)
        idx = np.flatnonzero(cand)[ok]
        out[idx] = vals[ok]
        branch[idx] = SERIES
        todo[idx] = False

    if np.any(todo):
        for i in np.flatnonzero(todo):
            out[i] = _bridge(alpha, beta, float(x[i]))
            branch[i] = QUADRATURE

    if _DEBUG:
        names, counts = np.unique(branch.astype(str), return_counts=True)
        log.debug("E_{%g,%g}: %s", alpha, beta, dict(zip(names.tolist(), counts.tolist())))
    if scalar:
        return float(out[0]), branch[0]
    return out, branch


def ml_eval(params: MlParams, z):
    """Evaluate ``E_{alpha,beta}(z)`` for scalar or array ``z``.

    Relative accuracy is about ``1e-12`` on the negative axis; positive ``z``
    is accepted only while ``z**(1/alpha) <= 600``.
    """
    values, _ = _evaluate(params, z)
    if isinstance(values, np.ndarray):
        return values.reshape(np.shape(z))
    return values


def mittag_leffler(alpha: float, beta: float, z):
    return ml_eval(MlParams(alpha, beta), z)


def branch_map(params: MlParams, z):
    """Name of the branch used for every entry of ``z`` (diagnostics)."""
    _, branch = _evaluate(params, z)
    return branch


def branch_switch_points(params: MlParams, xmax: float = 1e3, n: int = 400):
    """Arguments ``-x`` on a geometric sweep where the chosen branch changes."""
    x = np.geomspace(1e-3, xmax, n)
    branch = branch_map(params, -x)
    switches = [
        (float(x[i]), branch[i - 1], branch[i]) for i in range(1, n) if branch[i] != branch[i - 1]
    ]
    if _DEBUG:
        for xs, a, b in switches:
            log.debug("E_{%g,%g}: %s -> %s at x=%.4g", params.alpha, params.beta, a, b, xs)
    return switches


def ml_kernel(alpha: float, mu, m: float, t):
    """Convolution kernel ``t^(alpha-1) E_{alpha,alpha}(-mu*m*t^alpha)``, ``t > 0``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise DomainError("kernel is defined for t > 0 only")
    if np.any(np.asarray(mu) < 0) or m <= 0:
        raise DomainError("kernel needs mu >= 0 and m > 0")
    e = ml_eval(MlParams(alpha, alpha), -np.asarray(mu) * m * t**alpha)
    out = t ** (alpha - 1.0) * e
    return float(out) if np.ndim(out) == 0 else out


def ml_time_derivative(alpha: float, mu: float, t):
    """``d/dt E_{alpha,1}(-mu t^alpha) = -mu t^(alpha-1) E_{alpha,alpha}(-mu t^alpha)``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise DomainError("time derivative needs t > 0")
    if mu <= 0:
        raise DomainError("time derivative needs mu > 0")
    out = -mu * t ** (alpha - 1.0) * ml_eval(MlParams(alpha, alpha), -mu * t**alpha)
    return float(out) if np.ndim(out) == 0 else out
