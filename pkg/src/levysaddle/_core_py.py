"""Pure NumPy implementation of the hot kernels.

Every function mirrors one in ``_core.pyx``; the compiled module is preferred
when it imports.
"""
from __future__ import annotations

import math

import numpy as np

_CHUNK = 1 << 21


def log_phi0(z: np.ndarray) -> np.ndarray:
    """log(e^z - 1 - z), accurate for small |z| and large positive z."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 0.1
    big = z >= 1.0
    mid = ~(small | big)
    zs = z[small]
    series = zs * (1.0 / 3 + zs * (1.0 / 12 + zs * (1.0 / 60 + zs * (1.0 / 360 + zs * (1.0 / 2520 + zs * (1.0 / 20160 + zs / 181440))))))
    with np.errstate(divide="ignore"):
        out[small] = 2.0 * np.log(np.abs(zs)) - math.log(2.0) + np.log1p(series)
    zb = z[big]
    out[big] = zb + np.log1p(-(1.0 + zb) * np.exp(-zb))
    zm = z[mid]
    out[mid] = np.log(np.expm1(zm) - zm)
    return out


def log_abs_expm1(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z > 1.0
    out[pos] = z[pos] + np.log1p(-np.exp(-z[pos]))
    with np.errstate(divide="ignore"):
        out[~pos] = np.log(np.abs(np.expm1(z[~pos])))
    return out


def log_terms(v: np.ndarray, logw: np.ndarray, xi: float, k: int) -> np.ndarray:
    """log of |w * g_k(v, xi)| per node; the caller handles the sign."""
    z = xi * v
    with np.errstate(divide="ignore"):
        if k == 0:
            return logw + log_phi0(z)
        if k == 1:
            return logw + np.log(np.abs(v)) + log_abs_expm1(z)
        return logw + k * np.log(np.abs(v)) + z


def log_moment(v: np.ndarray, logw: np.ndarray, xi: float, k: int) -> float:
    """log sum_i w_i g_k(v_i, xi) for nodes whose terms are all nonnegative."""
    t = log_terms(v, logw, xi, k)
    top = float(np.max(t)) if t.size else -math.inf
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(t - top))))


def _sinmx(y: np.ndarray) -> np.ndarray:
    """sin(y) - y without cancellation for small |y|."""
    out = np.sin(y) - y
    small = np.abs(y) < 0.1
    ys = y[small]
    y2 = ys * ys
    out[small] = -ys * y2 / 6.0 * (1.0 - y2 / 20.0 * (1.0 - y2 / 42.0 * (1.0 - y2 / 72.0)))
    return out


def contour_sums(v: np.ndarray, logw: np.ndarray, xi: float, etas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per eta: A = sum w e^{xi v}(1 - cos(eta v)), B = sum w (e^{xi v} sin(eta v) - eta v)."""
    etas = np.asarray(etas, dtype=float)
    wt = np.exp(logw + xi * v)
    w = np.exp(logw)
    em1 = w * np.expm1(xi * v)
    a_out = np.empty(etas.size)
    b_out = np.empty(etas.size)
    step = max(1, _CHUNK // max(v.size, 1))
    for lo in range(0, etas.size, step):
        e = etas[lo:lo + step, None]
        ph = e * v[None, :]
        s = np.sin(ph)
        half = np.sin(0.5 * ph)
        a_out[lo:lo + step] = 2.0 * (half * half) @ wt
        b_out[lo:lo + step] = s @ em1 + _sinmx(ph) @ w
    return a_out, b_out


def cos_sums(v: np.ndarray, logw: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Per z: sum w (1 - cos(z v))."""
    zs = np.asarray(zs, dtype=float)
    w = np.exp(logw)
    out = np.empty(zs.size)
    step = max(1, _CHUNK // max(v.size, 1))
    for lo in range(0, zs.size, step):
        half = np.sin(0.5 * zs[lo:lo + step, None] * v[None, :])
        out[lo:lo + step] = 2.0 * (half * half) @ w
    return out
