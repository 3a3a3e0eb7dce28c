"""
Bessel functions of the first kind, integer order.

Power series for |x| <= 8; Miller's downward recurrence (normalized with
J0 + 2 sum J_2k = 1) beyond that.  Both routes are exposed so callers can
cross-check them.
"""
from __future__ import annotations

import math

import numpy as np

SERIES_LIMIT = 8.0


def bessel_j_series(n: int, x: float) -> float:
    """J_n(x) from its power series; accurate to ~1e-14 for |x| <= 8."""
    n = int(n)
    if n < 0:
        return (-1) ** n * bessel_j_series(-n, x)
    half = 0.5 * x
    term = half ** n / math.factorial(n)
    total = term
    q = -half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        total += term
        if abs(term) < 1e-17 * max(abs(total), 1e-300) and k > 2:
            break
        if k > 500:
            break
    return total


def bessel_j_recurrence(n: int, x: float) -> float:
    """J_n(x) by Miller's downward recurrence."""
    n = int(n)
    if n < 0:
        return (-1) ** n * bessel_j_recurrence(-n, x)
    ax = abs(x)
    if ax < 1e-3:
        # 2k/x overflows the recurrence; the series converges in a few terms here
        return bessel_j_series(n, x)
    # start well above both n and |x|
    m = 2 * ((max(n, int(ax)) + 15 + int(math.sqrt(40 * max(n, ax, 1.0)))) // 2)
    j_next, j_cur = 0.0, 1e-30
    norm = 0.0
    want = 0.0
    for k in range(m, 0, -1):
        j_prev = 2 * k / ax * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if abs(j_cur) > 1e250:
            j_cur *= 1e-250
            j_next *= 1e-250
            want *= 1e-250
            norm *= 1e-250
        if k - 1 == n:
            want = j_cur
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2 * j_cur
    norm += j_cur  # J0 term
    val = want / norm
    if x < 0 and n % 2 == 1:
        val = -val
    return val


def bessel_j(n: int, x):
    """J_n(x), vectorized over ``x``."""
    xs = np.asarray(x, dtype=float)
    flat = [bessel_j_series(n, v) if abs(v) <= SERIES_LIMIT else bessel_j_recurrence(n, v) for v in xs.ravel()]
    out = np.asarray(flat, dtype=float).reshape(xs.shape)
    return float(out) if out.ndim == 0 else out


def j0(x):
    return bessel_j(0, x)


def j1(x):
    return bessel_j(1, x)


def bisect_root(f, lo: float, hi: float, xtol: float = 1e-15, maxiter: int = 200) -> float:
    """Plain bisection; ``f(lo)`` and ``f(hi)`` must differ in sign."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise ValueError(f"root not bracketed on [{lo}, {hi}]")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or hi - lo < xtol:
            return mid
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)
