"""Least-squares line fit with Pearson correlation and its two-sided t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ZeroVarianceError

_EPS = 1e-16
_TINY = 1e-300


def _betacf(a: float, b: float, x: float, max_iter: int = 20000) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


# Stirling series coefficients for ln Gamma(z) - [(z - 1/2) ln z - z + ln(2 pi)/2]
_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360, 1 / 156)


def _stirling_tail(z: float) -> float:
    zi = 1.0 / z
    z2 = zi * zi
    acc = 0.0
    for c in reversed(_STIRLING):
        acc = acc * z2 + c
    return acc * zi


def _lgamma_ratio(s: float, big: float) -> float:
    """``ln Gamma(s + big) - ln Gamma(big)`` without cancelling two large logs."""
    if big < 10.0:
        return math.lgamma(s + big) - math.lgamma(big)
    return ((big - 0.5) * math.log1p(s / big) + s * math.log(s + big) - s
            + _stirling_tail(s + big) - _stirling_tail(big))


def _log_inv_beta(a: float, b: float) -> float:
    """``-ln B(a, b)``."""
    small, big = min(a, b), max(a, b)
    return _lgamma_ratio(small, big) - math.lgamma(small)


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = _log_inv_beta(a, b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for a Student-t variable with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    # I_{df/(df+t^2)}(df/2, 1/2); the complementary form keeps precision for small t
    if t2 < df:
        return 1.0 - betainc(0.5, 0.5 * df, t2 / (df + t2))
    return betainc(0.5 * df, 0.5, df / (df + t2))


def pearson_p_value(r: float, n: int) -> float:
    """Two-sided p-value for H0: correlation = 0."""
    if n < 3:
        raise ValueError("need n >= 3")
    r2 = r * r
    if r2 >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r2))
    return min(1.0, max(0.0, t_sf_two_sided(t, n - 2)))


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    pcc: float
    p_value: float
    n: int


def line_fit(x, y) -> LineFit:
    """OLS fit of ``y`` on ``x`` with Pearson r and its t-test p-value.

    Raises :class:`ZeroVarianceError` when either series is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("x and y must be 1-d series of equal length")
    n = x.shape[0]
    if n < 3:
        raise DataError(f"need at least 3 samples, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if not (sxx > 0) or not (syy > 0):
        raise ZeroVarianceError("zero variance in " + ("x" if not sxx > 0 else "y"))
    # relative guard: values that differ only by rounding noise count as constant
    if sxx <= (1e-13 * float(np.abs(x).max())) ** 2 * n or \
            syy <= (1e-13 * float(np.abs(y).max())) ** 2 * n:
        raise ZeroVarianceError("variance indistinguishable from rounding noise")
    sxy = float(dx @ dy)
    slope = sxy / sxx
    intercept = float(y.mean()) - slope * float(x.mean())
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    return LineFit(slope, intercept, r, pearson_p_value(r, n), n)
