"""Deterministic kernels f(t, s) and kernel-integrated moment functions.

Every integral over (s, u) depends on f(t, s) * u only, so the kernel and the
measure are combined into one node set over v = f(t, s) u (the image measure
of ds x mu(du)). The kernel part is a one-dimensional node set in s, built on
a partition refined for the exponential tilts and oscillation frequencies in
play.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from . import _backend
from ._quad import graded_edges, nodes_from_partition, refine_partition
from .measure import PANEL_PHASE, LevyMeasure, LogReal, NodeSet, freq_bucket, log_moment_nodes, measure_nodes, tilt_bucket
from .errors import OverflowRange, QuadratureError

KERNEL_RTOL = 1e-13
# largest s-node x u-node product built for an oscillatory node set; moment-only
# sets (frequency 0) get twice this, about 2.5 GB peak at 4.7e7 nodes
MAX_PRODUCT_NODES = 30_000_000


@dataclass(frozen=True)
class Indicator:
    """f(t, s) = 1 on [0, t]: the Levy process itself."""


@dataclass(frozen=True)
class OuNonStationary:
    """f(t, s) = exp(gamma (t - s)) on [0, t]."""

    gamma: float

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")


@dataclass(frozen=True)
class OuStationary:
    """f(s) = exp(-gamma s) = exp(|gamma| s) on (-inf, 0], gamma < 0; does not depend on t.

    This is f(t, s) = exp(gamma (t - s)) for s <= t taken at t = 0, the kernel
    of X_t = int_{-inf}^t exp(gamma (t - s)) dZ_s; it decays into the past.
    """

    gamma: float

    def __post_init__(self):
        if not self.gamma < 0:
            raise ValueError("stationary Ornstein-Uhlenbeck kernel needs gamma < 0")


@dataclass(frozen=True)
class FractionalLevy:
    """Moving-average kernel of fractional Levy motion with Hurst index in (1/2, 1)."""

    hurst: float

    def __post_init__(self):
        if not 0.5 < self.hurst < 1.0:
            raise ValueError("hurst must lie in (1/2, 1)")


Kernel = Union[Indicator, OuNonStationary, OuStationary, FractionalLevy]


@dataclass(frozen=True)
class SelfSimilarForm:
    """f(t, s) = chi(t) base_f(s / theta(t)); tau = chi * theta."""

    chi: Callable[[float], float]
    theta: Callable[[float], float]
    base_kernel: Kernel

    def tau(self, t: float) -> float:
        return self.chi(t) * self.theta(t)

    def base_f(self, s):
        return kernel_eval(self.base_kernel, 1.0, s)


def self_similar_form(kernel: Kernel) -> Optional[SelfSimilarForm]:
    if isinstance(kernel, Indicator):
        return SelfSimilarForm(lambda t: 1.0, lambda t: float(t), kernel)
    if isinstance(kernel, FractionalLevy):
        p = kernel.hurst - 0.5
        return SelfSimilarForm(lambda t: float(t) ** p, lambda t: float(t), kernel)
    return None


def _frac_values(hurst: float, t: float, s: np.ndarray) -> np.ndarray:
    p = hurst - 0.5
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    right = (s >= 0) & (s < t)
    out[right] = (t - s[right]) ** p
    left = s < 0
    b = -s[left]
    far = (b > t) & np.isfinite(b)
    vals = np.zeros_like(b)
    vals[far] = b[far] ** p * np.expm1(p * np.log1p(t / b[far]))
    near = b <= t
    vals[near] = (t + b[near]) ** p - b[near] ** p
    out[left] = vals
    return out / math.gamma(hurst + 0.5)


def kernel_eval(kernel: Kernel, t: float, s):
    """f(t, s); zero outside the kernel's support."""
    s_arr = np.asarray(s, dtype=float)
    if isinstance(kernel, Indicator):
        out = ((s_arr >= 0) & (s_arr <= t)).astype(float)
    elif isinstance(kernel, OuNonStationary):
        inside = (s_arr >= 0) & (s_arr <= t)
        out = np.where(inside, np.exp(kernel.gamma * (t - np.clip(s_arr, 0.0, t))), 0.0)
    elif isinstance(kernel, OuStationary):
        out = np.where(s_arr <= 0, np.exp(-kernel.gamma * np.minimum(s_arr, 0.0)), 0.0)
    elif isinstance(kernel, FractionalLevy):
        out = _frac_values(kernel.hurst, t, np.atleast_1d(s_arr)).reshape(s_arr.shape)
    else:
        raise TypeError(f"unknown kernel {kernel!r}")
    return float(out) if np.ndim(s) == 0 else out


def ess_sup(kernel: Kernel, t: float) -> float:
    """Essential supremum of f(t, .)."""
    if isinstance(kernel, Indicator):
        return 1.0
    if isinstance(kernel, OuNonStationary):
        return math.exp(max(kernel.gamma * t, 0.0))
    if isinstance(kernel, OuStationary):
        return 1.0
    if isinstance(kernel, FractionalLevy):
        # increasing on (-inf, 0), decreasing on (0, t)
        return t ** (kernel.hurst - 0.5) / math.gamma(kernel.hurst + 0.5)
    raise TypeError(f"unknown kernel {kernel!r}")


def support_length(kernel: Kernel, t: float) -> float:
    if isinstance(kernel, (Indicator, OuNonStationary)):
        return float(t)
    return math.inf


# --------------------------------------------------------------------------
# s-node sets


@dataclass(frozen=True, eq=False)
class KernelNodes:
    """Nodes in s: kernel values f_i and log weights (Jacobians included)."""

    f: np.ndarray
    logw: np.ndarray


def _pieces(kernel: Kernel, t: float, lam_max: float):
    """(edges, map) pairs: map takes a variable to (f, log Jacobian)."""
    if isinstance(kernel, OuNonStationary):
        g = kernel.gamma
        lo, hi = sorted((1.0, math.exp(g * t)))

        def ou_map(v):
            return v, -np.log(abs(g) * v)

        return [(graded_edges(lo, hi, "both", 60), ou_map)]
    if isinstance(kernel, OuStationary):
        g = kernel.gamma

        def st_map(v):
            with np.errstate(divide="ignore"):
                return v, -np.log(abs(g) * v)

        return [(graded_edges(0.0, 1.0, "both", 60), st_map)]
    if isinstance(kernel, FractionalLevy):
        h = kernel.hurst

        def right_map(s):
            return _frac_values(h, t, s), np.zeros_like(s)

        def left_map(q):
            # s = 1 - 1/q, ds = dq / q^2; 1 - q is exact for q >= 1/2
            with np.errstate(divide="ignore"):
                return _frac_values(h, t, -(1.0 - q) / q), -2.0 * np.log(q)

        depth_tail = min(1000, int(math.ceil(60.0 / (2.0 - 2.0 * h))))
        left = np.vstack([graded_edges(0.0, 0.5, "a", depth_tail), graded_edges(0.5, 1.0, "b", 60)])
        return [(graded_edges(0.0, t, "both", 60), right_map), (left, left_map)]
    raise TypeError(f"kernel {kernel!r} has no s-node construction")


@lru_cache(maxsize=64)
def _kernel_nodes(kernel: Kernel, t: float, lam_pos: float, lam_neg: float, phase: float) -> KernelNodes:
    lams = sorted({0.0} | {lam_pos * c for c in (1 / 64, 1 / 16, 1 / 4, 1 / 2, 1.0)}
                  | {-lam_neg * c for c in (1 / 64, 1 / 16, 1 / 4, 1 / 2, 1.0)})
    fs, lws = [], []
    for edges, fmap in _pieces(kernel, t, max(lam_pos, lam_neg)):
        def log_eval(x, fmap=fmap):
            f, lj = fmap(x)
            with np.errstate(divide="ignore", invalid="ignore"):
                lf = np.log(f)
                cols = []
                for lam in lams:
                    z = lam * f
                    if lam != 0.0:
                        cols.append(lj + _backend.log_phi0(z))
                    cols.append(lj + 2.0 * lf + z)
                    cols.append(lj + 4.0 * lf + z)
                out = np.column_stack(cols)
            out[~np.isfinite(out)] = -np.inf
            return out

        max_width = None
        if phase > 0:
            def max_width(e, fmap=fmap):
                probe = e[:, 0:1] + (e[:, 1:2] - e[:, 0:1]) * np.linspace(0.0, 1.0, 5)[None, :]
                f, _ = fmap(probe.ravel())
                f = f.reshape(probe.shape)
                return (np.max(f, axis=1) - np.min(f, axis=1)) * phase > PANEL_PHASE

        edges = refine_partition(edges, log_eval, KERNEL_RTOL, max_width=max_width)
        x, w = nodes_from_partition(edges)
        f, lj = fmap(x)
        with np.errstate(divide="ignore"):
            lw = np.log(w) + lj
        keep = np.isfinite(lw) & (f > 0)
        fs.append(f[keep])
        lws.append(lw[keep])
    return KernelNodes(np.concatenate(fs), np.concatenate(lws))


def kernel_nodes(kernel: Kernel, t: float, lam_pos: float = 0.0, lam_neg: float = 0.0, phase: float = 0.0) -> KernelNodes:
    return _kernel_nodes(kernel, float(t), tilt_bucket(lam_pos), tilt_bucket(lam_neg), freq_bucket(phase))


@lru_cache(maxsize=24)
def _effective(kernel: Kernel, t: float, measure: LevyMeasure, xi_b: float, freq_b: float) -> NodeSet:
    big_f = ess_sup(kernel, t)
    mu = measure_nodes(measure, big_f * xi_b, big_f * freq_b)
    if isinstance(kernel, Indicator) or (isinstance(kernel, OuNonStationary) and kernel.gamma == 0.0):
        return NodeSet(mu.v, mu.logw + math.log(t))
    pos, neg = mu.split_sign()
    u_pos = pos.effective_extent(big_f * xi_b)
    u_neg = neg.effective_extent(big_f * xi_b)
    kn = kernel_nodes(kernel, t, xi_b * u_pos, xi_b * u_neg, freq_b * max(u_pos, u_neg))
    budget = MAX_PRODUCT_NODES if freq_b > 0 else 2 * MAX_PRODUCT_NODES
    if len(kn.f) * len(mu) > budget:
        raise QuadratureError(
            f"effective node set would hold {len(kn.f) * len(mu):,} nodes "
            f"(budget {budget:,}); lower the oscillation range or use fewer atoms",
            achieved=math.inf,
        )
    v = (kn.f[:, None] * mu.v[None, :]).ravel()
    lw = (kn.logw[:, None] + mu.logw[None, :]).ravel()
    return NodeSet(v, lw)


def effective_nodes(kernel: Kernel, measure: LevyMeasure, t: float, xi: float = 0.0, freq: float = 0.0) -> NodeSet:
    """Node set of the image measure ds x mu(du) under (s, u) -> f(t, s) u.

    Valid for tilts up to ``xi`` and oscillation frequencies up to ``freq``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    return _effective(kernel, float(t), measure, tilt_bucket(abs(xi)), freq_bucket(freq))


def log_script_moment(kernel: Kernel, measure: LevyMeasure, k: int, t: float, xi: float) -> LogReal:
    return log_moment_nodes(effective_nodes(kernel, measure, t, xi), k, xi)


def script_moment(kernel: Kernel, measure: LevyMeasure, k: int, t: float, xi: float) -> Union[float, LogReal]:
    """Kernel-integrated moment int f^k(t, s) M_k(f(t, s) xi) ds.

    Floats for k = 0, 1 (compensated forms), ``LogReal`` for k >= 2.
    """
    if k not in (0, 1, 2, 3, 4):
        raise ValueError("k must be in 0..4")
    if not xi >= 0:
        raise ValueError("xi must be nonnegative; reflect the measure for the left tail")
    lr = log_script_moment(kernel, measure, k, t, xi)
    if k >= 2:
        return lr
    if lr.log > 709.78:
        raise OverflowRange(f"script M_{k} exceeds the floating point range (log = {lr.log:.6g})")
    return lr.value
