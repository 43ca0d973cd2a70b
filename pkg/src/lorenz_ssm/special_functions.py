"""Numerical kernel: log-gamma, regularized incomplete beta, normal CDF and
quantile, and Gauss-Legendre quadrature.

The scalar kernels are compiled with numba and exposed twice: as raw ufuncs
(``lgamma_u``, ``betainc_u``, ``ndtr_u``, ``ndtri_u``) that broadcast over
arrays and return NaN outside their domain, and as checked public functions
that raise :class:`DomainError`. The sampler's inner loops use the raw ufuncs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numba
import numpy as np

__all__ = [
    "DomainError",
    "QuadratureRule",
    "log_gamma",
    "log_beta",
    "reg_inc_beta",
    "normal_cdf",
    "normal_quantile",
    "gauss_legendre",
    "integrate",
    "unit_interval_rule",
    "lgamma_u",
    "betainc_u",
    "ndtr_u",
    "ndtri_u",
    "DEFAULT_ORDER",
]

DEFAULT_ORDER = 64

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Argument outside the mathematical domain of a special function."""


# --------------------------------------------------------------------------
# log-gamma: recurrence shift to x >= 10, then the Stirling series

# Taylor coefficients of ln Gamma(1 + e): -euler_gamma, then (-1)^k zeta(k) / k
_LG1_COEF = np.array([
    -0.5772156649015329, 0.8224670334241132, -0.40068563438653143,
    0.27058080842778454, -0.20738555102867398, 0.1695571769974082,
    -0.1440498967688461, 0.12550966952474304, -0.11133426586956469,
    0.1000994575127818, -0.09095401714582904, 0.083353840546109,
    -0.0769325164113522, 0.07143294629536133, -0.06666870588242046,
    0.06250095514121304, -0.058823978658684585, 0.055555767627403614,
    -0.05263167937961666, 0.05000004769810169, -0.047619070330142226,
    0.04545455629320467, -0.04347826605304026, 0.04166666915034121,
    -0.04000000119214014, 0.03846153903467518,
])


@numba.njit(cache=True)
def _lgamma_near_one(e):
    acc = 0.0
    for k in range(_LG1_COEF.shape[0] - 1, -1, -1):
        acc = acc * e + _LG1_COEF[k]
    return acc * e


@numba.njit(cache=True)
def _lgamma_scalar(x):
    if not (x > 0.0) or math.isinf(x):
        return math.nan
    if x == 1.0 or x == 2.0:
        return 0.0
    # relative accuracy next to the roots at 1 and 2
    if abs(x - 1.0) < 0.2:
        return _lgamma_near_one(x - 1.0)
    if abs(x - 2.0) < 0.2:
        return math.log1p(x - 2.0) + _lgamma_near_one(x - 2.0)
    shift = 0.0
    if x < 10.0:
        prod = 1.0
        while x < 10.0:
            prod *= x
            x += 1.0
        shift = math.log(prod)
    z = 1.0 / x
    z2 = z * z
    series = z * (1.0 / 12.0 + z2 * (-1.0 / 360.0 + z2 * (1.0 / 1260.0 + z2 * (
        -1.0 / 1680.0 + z2 * (1.0 / 1188.0 + z2 * (-691.0 / 360360.0 + z2 * (1.0 / 156.0)))))))
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + series - shift


# --------------------------------------------------------------------------
# regularized incomplete beta: modified Lentz continued fraction

@numba.njit(cache=True)
def _betacf(a, b, x):
    tiny = 1e-300
    eps = 1e-16
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 5001):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    return math.nan


@numba.njit(cache=True)
def _betainc_scalar(z, a, b):
    if not (a > 0.0 and b > 0.0) or math.isnan(z) or z < 0.0 or z > 1.0:
        return math.nan
    if z == 0.0:
        return 0.0
    if z == 1.0:
        return 1.0
    lbeta = _lgamma_scalar(a) + _lgamma_scalar(b) - _lgamma_scalar(a + b)
    front = math.exp(a * math.log(z) + b * math.log1p(-z) - lbeta)
    if z < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, z) / a
    return 1.0 - front * _betacf(b, a, 1.0 - z) / b


# --------------------------------------------------------------------------
# normal distribution; quantile is Wichura's AS 241 (PPND16)

@numba.njit(cache=True)
def _ndtr_scalar(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@numba.njit(cache=True)
def _ndtri_scalar(p):
    if not (p > 0.0 and p < 1.0):
        return math.nan
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@numba.vectorize(["float64(float64)"], cache=True)
def lgamma_u(x):
    return _lgamma_scalar(x)


@numba.vectorize(["float64(float64, float64, float64)"], cache=True)
def betainc_u(z, a, b):
    return _betainc_scalar(z, a, b)


@numba.vectorize(["float64(float64)"], cache=True)
def ndtr_u(x):
    return _ndtr_scalar(x)


@numba.vectorize(["float64(float64)"], cache=True)
def ndtri_u(p):
    return _ndtri_scalar(p)


def _maybe_scalar(out):
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def log_gamma(x):
    """ln Gamma(x) for x > 0 (scalar or array)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise DomainError("log_gamma requires finite x > 0")
    return _maybe_scalar(lgamma_u(x))


def log_beta(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return _maybe_scalar(lgamma_u(a) + lgamma_u(b) - lgamma_u(a + b))


def reg_inc_beta(z, a, b):
    """Regularized incomplete beta ratio I_z(a, b).

    Near z = 1 the result is computed as 1 - I_{1-z}(b, a), so callers who
    can form 1 - z accurately should use the complementary call directly
    (see ``lorenz._beta_ratio``).
    """
    z, a, b = (np.asarray(v, dtype=float) for v in (z, a, b))
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise DomainError("reg_inc_beta requires a > 0 and b > 0")
    if np.any(~((z >= 0) & (z <= 1))):
        raise DomainError("reg_inc_beta requires 0 <= z <= 1")
    return _maybe_scalar(betainc_u(z, a, b))


def normal_cdf(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise DomainError("normal_cdf of NaN")
    return _maybe_scalar(ndtr_u(x))


def normal_quantile(p):
    """Inverse of the standard normal CDF for p strictly inside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("normal_quantile requires 0 < p < 1")
    return _maybe_scalar(ndtri_u(p))


# --------------------------------------------------------------------------
# Gauss-Legendre quadrature

@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int


@lru_cache(maxsize=16)
def gauss_legendre(order: int = DEFAULT_ORDER) -> QuadratureRule:
    """Gauss-Legendre nodes and weights on [-1, 1].

    Roots of P_n are polished by Newton's method from the Tricomi-type
    initial guess; P_n and its derivative come from the three-term
    recurrence.
    """
    if order < 1:
        raise DomainError("quadrature order must be positive")
    n = order
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    # recompute derivative at the polished roots
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order_idx = np.argsort(x)
    x = x[order_idx]
    w = w[order_idx]
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w, order=n)


def integrate(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
              rule: QuadratureRule | None = None) -> float:
    """Integrate ``f`` over [lo, hi]; ``f`` is called once on the array of nodes."""
    if not lo < hi:
        raise DomainError("integrate requires lo < hi")
    rule = rule or gauss_legendre(DEFAULT_ORDER)
    half = 0.5 * (hi - lo)
    x = lo + half * (rule.nodes + 1.0)
    return float(half * np.dot(rule.weights, np.asarray(f(x), dtype=float)))


@lru_cache(maxsize=16)
def unit_interval_rule(order: int = DEFAULT_ORDER, power: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule pulled back to (0, 1) through p = s^k / (s^k + (1-s)^k).

    The map clusters nodes at both endpoints, which absorbs algebraic
    endpoint singularities such as p^xi (1-p)^delta with small exponents.
    Weights sum to 1.
    """
    rule = gauss_legendre(order)
    s = 0.5 * (rule.nodes + 1.0)
    w = 0.5 * rule.weights
    a = s**power
    b = (1.0 - s) ** power
    nodes = a / (a + b)
    weights = w * power * (s * (1.0 - s)) ** (power - 1) / (a + b) ** 2
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights
