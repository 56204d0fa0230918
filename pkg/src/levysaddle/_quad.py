"""Panel quadrature: Gauss-Kronrod rules, graded partitions and adaptive refinement.

Two refinement drivers live here. ``refine_partition`` works on nonnegative
integrands given in log form and returns a partition whose Kronrod nodes
integrate every test column to a relative tolerance; the partition is then
reused as a fixed node set. ``integrate`` is a conventional vector-valued
adaptive integrator for signed integrands.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import QuadratureError

# 15-point Kronrod abscissae (nonnegative half, descending) and weights,
# with the weights of the embedded 7-point Gauss rule.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_X = np.concatenate([-_XK[:7], [0.0], _XK[:7][::-1]])
KRONROD_W = np.concatenate([_WK[:7], [_WK[7]], _WK[:7][::-1]])
GAUSS_W = np.zeros(15)
for _i, _j in enumerate((1, 3, 5)):
    GAUSS_W[_j] = _WG[_i]
    GAUSS_W[14 - _j] = _WG[_i]
GAUSS_W[7] = _WG[3]
NPANEL = 15


def panel_points(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Kronrod nodes and weights for every panel of an (P, 2) edge array."""
    a = edges[:, 0:1]
    b = edges[:, 1:2]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid + half * KRONROD_X[None, :]
    w = half * KRONROD_W[None, :]
    return x, w


def nodes_from_partition(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flattened Kronrod nodes and positive weights of a partition."""
    x, w = panel_points(edges)
    return x.ravel(), w.ravel()


def graded_edges(a: float, b: float, toward: str, depth: int, ratio: float = 0.5) -> np.ndarray:
    """Geometric panels on [a, b] shrinking toward one endpoint.

    ``toward`` is "a", "b" or "both" (both grades from the midpoint). The last
    panel reaches the endpoint itself.
    """
    if toward == "both":
        m = 0.5 * (a + b)
        return np.vstack([graded_edges(a, m, "a", depth, ratio), graded_edges(m, b, "b", depth, ratio)])
    length = b - a
    cuts = length * ratio ** np.arange(depth + 1)
    if toward == "a":
        pts = np.concatenate([[b], a + cuts[1:], [a]])[::-1]
    else:
        pts = np.concatenate([[a], b - cuts[1:], [b]])
    pts = np.unique(pts)
    return np.column_stack([pts[:-1], pts[1:]])


def uniform_edges(a: float, b: float, n: int) -> np.ndarray:
    pts = np.linspace(a, b, n + 1)
    return np.column_stack([pts[:-1], pts[1:]])


_CHUNK_PANELS = 20_000


def _panel_sums(edges: np.ndarray, log_eval):
    """Kronrod and Gauss sums per panel and column, on a common scale, plus a rounding-noise factor.

    Panels are evaluated in chunks, each exponentiated about its own maximum,
    so memory stays bounded however many panels and columns there are.
    """
    ks, gs, mags, shifts = [], [], [], []
    for lo in range(0, edges.shape[0], _CHUNK_PANELS):
        e = edges[lo:lo + _CHUNK_PANELS]
        x, _w = panel_points(e)
        half = 0.5 * (e[:, 1] - e[:, 0])
        logv = log_eval(x.ravel()).reshape(x.shape[0], NPANEL, -1)
        shift = np.max(logv, axis=(0, 1))
        shift = np.where(np.isfinite(shift), shift, 0.0)
        vals = np.exp(logv - shift[None, None, :])
        ks.append(np.einsum("pnm,n->pm", vals, KRONROD_W) * half[:, None])
        gs.append(np.einsum("pnm,n->pm", vals, GAUSS_W) * half[:, None])
        fin = np.isfinite(logv)
        mags.append(np.max(np.where(fin, np.abs(logv - shift[None, None, :]) + np.abs(shift)[None, None, :], 0.0), axis=1))
        shifts.append(shift)
    top = np.max(np.vstack(shifts), axis=0)
    for j, sh in enumerate(shifts):
        scale = np.exp(sh - top)[None, :]
        ks[j] = ks[j] * scale
        gs[j] = gs[j] * scale
    return np.vstack(ks), np.vstack(gs), np.maximum(np.vstack(mags), 1.0)


def refine_partition(
    edges: np.ndarray,
    log_eval: Callable[[np.ndarray], np.ndarray],
    rtol: float,
    max_width: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_panels: int = 400_000,
    max_rounds: int = 80,
) -> np.ndarray:
    """Bisect panels until every log-form test column meets ``rtol``.

    ``log_eval`` maps a flat point array (n,) to log-integrands (n, m); ``-inf``
    marks zeros. A panel is split when the Kronrod/Gauss discrepancy of any
    column (sharpened as in QUADPACK) exceeds ``rtol`` times that column's total divided by the panel
    count. ``max_width`` optionally maps panel edges to a boolean mask of panels
    that must be split regardless (oscillation control).
    """
    edges = np.asarray(edges, dtype=float)
    for _ in range(max_rounds):
        k, g, noise = _panel_sums(edges, log_eval)
        total = k.sum(axis=0)
        # discrepancy of the embedded rules, sharpened as in QUADPACK: the raw
        # difference measures the 7-point error, far above the 15-point one
        raw = np.abs(k - g)
        with np.errstate(divide="ignore", invalid="ignore"):
            err = np.where(k > 0, k * np.minimum(1.0, (200.0 * raw / k) ** 1.5), raw)
        npan = edges.shape[0]
        limit = rtol * np.where(total > 0, total, 1.0) / max(npan, 16)
        # discrepancies at the rounding level of the log-form values are noise
        floor = 64.0 * np.finfo(float).eps * noise * np.abs(k)
        bad = np.any((err > limit[None, :]) & (err > floor), axis=1)
        if max_width is not None:
            bad |= max_width(edges)
        # panels too narrow to split further are accepted as they are
        mids = 0.5 * (edges[:, 0] + edges[:, 1])
        tiny = (edges[:, 1] - edges[:, 0]) <= 4.0 * np.spacing(np.abs(mids)) + 1e-300
        bad &= ~tiny
        if not bad.any():
            return edges
        split = edges[bad]
        m = 0.5 * (split[:, 0] + split[:, 1])
        new = np.vstack([edges[~bad], np.column_stack([split[:, 0], m]), np.column_stack([m, split[:, 1]])])
        edges = new[np.argsort(new[:, 0], kind="stable")]
        if edges.shape[0] > max_panels:
            raise QuadratureError(
                f"node refinement exceeded {max_panels} panels", achieved=float(np.max(err / np.maximum(total, 1e-300)))
            )
    raise QuadratureError("node refinement did not settle", achieved=float("nan"))


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rtol: float = 1e-10,
    atol: float = 0.0,
    ncols_err: int = 1,
    must_split: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
    initial: int = 8,
    max_evals: int = 2_000_000,
    local: bool = False,
) -> tuple[np.ndarray, float]:
    """Adaptive Gauss-Kronrod integration of a vector-valued integrand.

    ``f`` maps points (n,) to values (n, m). Error control uses the first
    ``ncols_err`` columns. ``must_split(edges, values)`` receives the panel edges
    and the (P, 15, m) panel values and returns panels to split regardless of
    the error estimate. With ``local`` a panel is also accepted when its error
    is within ``rtol`` of its own value, which suits nonnegative integrands with
    steep ends. Returns the integral of every column and the error estimate of
    the controlled columns.
    """
    if b <= a:
        probe = np.asarray(f(np.array([a])))
        m = probe.shape[1] if probe.ndim == 2 else 1
        return np.zeros(m), 0.0
    active = uniform_edges(a, b, initial)
    done_val = None
    done_err = 0.0
    n_eval = 0
    length = b - a
    while active.shape[0]:
        x, w = panel_points(active)
        v = np.asarray(f(x.ravel()), dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        n_eval += v.shape[0]
        v = v.reshape(active.shape[0], NPANEL, -1)
        half = 0.5 * (active[:, 1] - active[:, 0])
        k = np.einsum("pnm,n->pm", v, KRONROD_W) * half[:, None]
        g = np.einsum("pnm,n->pm", v, GAUSS_W) * half[:, None]
        err = np.max(np.abs(k - g)[:, :ncols_err], axis=1)
        if done_val is None:
            done_val = np.zeros(k.shape[1])
        est = done_val + k.sum(axis=0)
        tol = max(atol, rtol * float(np.max(np.abs(est[:ncols_err]))))
        width = active[:, 1] - active[:, 0]
        bad = err > tol * width / length
        if local:
            bad &= err > rtol * np.max(np.abs(k[:, :ncols_err]), axis=1)
        if must_split is not None:
            bad |= must_split(active, v)
        mids = 0.5 * (active[:, 0] + active[:, 1])
        bad &= width > 8.0 * np.spacing(np.abs(mids)) + 1e-300
        done_val = done_val + k[~bad].sum(axis=0)
        done_err += float(err[~bad].sum())
        split = active[bad]
        if n_eval > max_evals:
            raise QuadratureError(
                "adaptive integration exceeded its evaluation budget",
                achieved=(done_err + float(err[bad].sum())) / max(float(np.max(np.abs(est[:ncols_err]))), 1e-300),
            )
        m = 0.5 * (split[:, 0] + split[:, 1])
        active = np.vstack([np.column_stack([split[:, 0], m]), np.column_stack([m, split[:, 1]])])
    return done_val, done_err


def log_sum_exp(values: np.ndarray) -> float:
    if values.size == 0:
        return -math.inf
    top = float(np.max(values))
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(values - top))))
