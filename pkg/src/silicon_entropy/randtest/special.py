"""Complementary error function and regularized incomplete gamma functions.

Series and continued-fraction expansions in the style of the Cephes library,
kept in-module so P-values do not depend on the platform's libm or SciPy.
"""

from __future__ import annotations

import math

MACHEP = 1.11022302462515654042e-16
MAXLOG = 7.09782712893383996843e2
_BIG = 4.503599627370496e15
_BIGINV = 2.22044604925031308085e-16
_MAX_ITER = 100_000


def _log_prefactor(a: float, x: float) -> float:
    return a * math.log(x) - x - math.lgamma(a)


def igam(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("igam requires a > 0")
    if x <= 0:
        return 0.0
    if x > 1.0 and x > a:
        return 1.0 - igamc(a, x)
    ax = _log_prefactor(a, x)
    if ax < -MAXLOG:
        return 0.0
    ax = math.exp(ax)
    r, c, ans = a, 1.0, 1.0
    for _ in range(_MAX_ITER):
        r += 1.0
        c *= x / r
        ans += c
        if c / ans <= MACHEP:
            break
    return ans * ax / a


def igamc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0:
        raise ValueError("igamc requires a > 0")
    if x <= 0:
        return 1.0
    if x < 1.0 or x < a:
        return 1.0 - igam(a, x)
    ax = _log_prefactor(a, x)
    if ax < -MAXLOG:
        return 0.0
    ax = math.exp(ax)

    y = 1.0 - a
    z = x + y + 1.0
    c = 0.0
    pkm2, qkm2 = 1.0, x
    pkm1, qkm1 = x + 1.0, z * x
    ans = pkm1 / qkm1
    for _ in range(_MAX_ITER):
        c += 1.0
        y += 1.0
        z += 2.0
        yc = y * c
        pk = pkm1 * z - pkm2 * yc
        qk = qkm1 * z - qkm2 * yc
        if qk != 0:
            r = pk / qk
            t = abs((ans - r) / r)
            ans = r
        else:
            t = 1.0
        pkm2, pkm1 = pkm1, pk
        qkm2, qkm1 = qkm1, qk
        if abs(pk) > _BIG:
            pkm2 *= _BIGINV
            pkm1 *= _BIGINV
            qkm2 *= _BIGINV
            qkm1 *= _BIGINV
        if t <= MACHEP:
            break
    return ans * ax


def erfc(x: float) -> float:
    if math.isnan(x):
        return math.nan
    if x < 0:
        return 2.0 - erfc(-x)
    return igamc(0.5, x * x)


def normal_cdf(x: float) -> float:
    return 0.5 * erfc(-x / math.sqrt(2.0))
