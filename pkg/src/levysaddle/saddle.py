"""Saddle-point equation, asymptotic density, self-similar profiles and shift ratios.

Everything is carried in log form: the solver works on log M1(t, xi) - log x,
and densities are returned as log values with the linear value attached only
when it is a normal floating point number.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _backend
from ._core_py import log_abs_expm1
from .errors import OverflowRange, SaddleError
from .kernel import (
    Kernel,
    OuStationary,
    effective_nodes,
    ess_sup,
    log_script_moment,
    self_similar_form,
)
from .measure import ExpDamped, LevyMeasure, Truncated

LOG_2PI = math.log(2.0 * math.pi)
_LOG_TINY = math.log(sys.float_info.min)
SADDLE_RTOL = 1e-10
# the tilt at which even a unit jump would overflow the extended log range
_XI_CEILING = 1e300


@dataclass(frozen=True)
class SaddlePoint:
    t: float
    x: float
    xi: float
    big_d: float
    log_big_k: float
    iterations: int = 0

    @property
    def big_k(self) -> float:
        return math.exp(self.log_big_k) if self.log_big_k < 709.78 else math.inf


@dataclass(frozen=True)
class DensityEstimate:
    log_p: float
    p: Optional[float]
    method: str
    err_estimate: Optional[float] = None

    @classmethod
    def from_log(cls, log_p: float, method: str, err_estimate: Optional[float] = None) -> "DensityEstimate":
        p = math.exp(log_p) if log_p >= _LOG_TINY else None
        return cls(log_p, p, method, err_estimate)


@dataclass(frozen=True)
class SelfSimilarProfile:
    y: float
    zeta: float
    script_d: float
    log_script_k: float

    @property
    def script_k(self) -> float:
        return math.exp(self.log_script_k)


def _tail_guess(kernel: Kernel, measure: LevyMeasure, t: float, x: float, m2_zero: float) -> float:
    guess = x / m2_zero
    tc = measure.tail_class
    if tc is None or guess <= 4.0:
        return guess
    big_f = ess_sup(kernel, t)
    lx = math.log(x)
    if lx <= 1.0:
        return guess
    if isinstance(tc, Truncated):
        return lx / (tc.sigma_plus * big_f)
    if isinstance(tc, ExpDamped):
        beta = tc.beta
        c2 = beta ** (-1.0 / (beta - 1.0)) - beta ** (-beta / (beta - 1.0))
        c_big = c2 * tc.b ** (-1.0 / (beta - 1.0)) * big_f ** (beta / (beta - 1.0))
        return (lx / c_big) ** ((beta - 1.0) / beta)
    return guess


def _log_m1(kernel, measure, t, xi):
    lr = log_script_moment(kernel, measure, 1, t, xi)
    return lr.log


def solve_saddle(kernel: Kernel, measure: LevyMeasure, t: float, x: float, rtol: float = SADDLE_RTOL) -> SaddlePoint:
    """Solve M1(t, xi) = x for xi >= 0 and evaluate D and log K there.

    Safeguarded Newton on log M1(t, xi) - log x inside a bracket found by
    doubling. The residual meets |M1 - x| <= rtol * max(1, x).
    """
    t = float(t)
    x = float(x)
    if not t > 0:
        raise ValueError("t must be positive")
    if not (x >= 0 and math.isfinite(x)):
        raise ValueError("x must be finite and nonnegative; reflect the measure for the left tail")
    log_m2_zero = log_script_moment(kernel, measure, 2, t, 0.0).log
    if x == 0.0:
        return SaddlePoint(t, 0.0, 0.0, 0.0, log_m2_zero)
    log_x = math.log(x)
    htol = rtol * max(1.0, x) / x
    # residual test in log form is slightly stricter than the linear one; Newton
    # is cheap near the root, so iterate on to near working precision anyway
    htol = min(htol, math.log1p(htol), -math.log1p(-min(htol, 0.5)), 1e-14)

    def h(xi):
        try:
            return _log_m1(kernel, measure, t, xi) - log_x
        except OverflowRange as exc:
            raise SaddleError(f"no saddle point for x={x:g}: {exc}") from exc

    xi = _tail_guess(kernel, measure, t, x, math.exp(log_m2_zero))
    lo, hi = 0.0, math.inf
    iterations = 0
    hv = h(xi)
    # establish the bracket by doubling or halving from the guess
    while hv < 0:
        lo = xi
        xi *= 2.0
        iterations += 1
        if xi > _XI_CEILING:
            raise SaddleError(f"no saddle bracket for x={x:g} within the representable range")
        hv = h(xi)
    hi = xi
    if abs(hv) <= htol:
        return _finish(kernel, measure, t, x, xi, iterations)
    for _ in range(400):
        iterations += 1
        m2 = log_script_moment(kernel, measure, 2, t, xi).log
        slope = math.exp(m2 - (hv + log_x))
        step = xi - hv / slope if slope > 0 and math.isfinite(slope) else math.nan
        if not (lo < step < hi):
            step = 0.5 * (lo + hi) if lo > 0 or hi < 1.0 else math.sqrt(max(lo, hi * 1e-8) * hi)
        xi = step
        hv = h(xi)
        if abs(hv) <= htol:
            return _finish(kernel, measure, t, x, xi, iterations)
        if hv < 0:
            lo = xi
        else:
            hi = xi
        if hi - lo <= 4.0 * math.ulp(hi):
            return _finish(kernel, measure, t, x, xi, iterations)
    raise SaddleError(f"saddle iteration did not converge for x={x:g} (residual {hv:.3g} in log form)")


def _finish(kernel, measure, t, x, xi, iterations) -> SaddlePoint:
    m0 = log_script_moment(kernel, measure, 0, t, xi)
    log_k = log_script_moment(kernel, measure, 2, t, xi).log
    big_d = -x * xi + m0.value
    return SaddlePoint(t, x, xi, big_d, log_k, iterations)


def density_asymptotic(sp: SaddlePoint) -> DensityEstimate:
    """Leading saddle-point density (2 pi K)^{-1/2} e^D, in log form."""
    return DensityEstimate.from_log(sp.big_d - 0.5 * (LOG_2PI + sp.log_big_k), "asymptotic")


def density(kernel: Kernel, measure: LevyMeasure, t: float, x: float) -> DensityEstimate:
    return density_asymptotic(solve_saddle(kernel, measure, t, x))


def self_similar_profile(kernel: Kernel, measure: LevyMeasure, y: float) -> SelfSimilarProfile:
    """zeta, D and log K of the base kernel (t = 1) at the rescaled argument y."""
    form = self_similar_form(kernel)
    if form is None:
        raise ValueError(f"{type(kernel).__name__} has no self-similar form")
    sp = solve_saddle(form.base_kernel, measure, 1.0, y)
    return SelfSimilarProfile(float(y), sp.xi, sp.big_d, sp.log_big_k)


def from_profile(kernel: Kernel, profile: SelfSimilarProfile, t: float) -> SaddlePoint:
    """Rebuild (xi, D, log K) at time t from the base profile at y = x / tau(t)."""
    form = self_similar_form(kernel)
    if form is None:
        raise ValueError(f"{type(kernel).__name__} has no self-similar form")
    chi, theta = form.chi(t), form.theta(t)
    tau = chi * theta
    return SaddlePoint(
        float(t),
        profile.y * tau,
        profile.zeta / chi,
        theta * profile.script_d,
        2.0 * math.log(tau) - math.log(theta) + profile.log_script_k,
    )


def profile_density(kernel: Kernel, measure: LevyMeasure, t: float, x: float) -> DensityEstimate:
    """Density at (t, x) through the base profile: (1/tau) sqrt(theta / (2 pi K)) e^{theta D}."""
    form = self_similar_form(kernel)
    if form is None:
        raise ValueError(f"{type(kernel).__name__} has no self-similar form")
    tau, theta = form.tau(t), form.theta(t)
    prof = self_similar_profile(kernel, measure, x / tau)
    log_p = -math.log(tau) + 0.5 * (math.log(theta) - LOG_2PI - prof.log_script_k) + theta * prof.script_d
    return DensityEstimate.from_log(log_p, "asymptotic")


class DensityRatio(NamedTuple):
    exact_ratio: float
    asymptotic_ratio: float


class LogDensityRatio(NamedTuple):
    log_exact: float
    log_asymptotic: float
    xi: float


def _tilt_increment(v, logw, xi: float, a: float, d_max: float) -> float:
    """delta with M1(xi + delta) - M1(xi) = a, from sum w v e^{xi v} expm1(delta v)."""
    base = logw + xi * v
    with np.errstate(divide="ignore"):
        lv = np.log(np.abs(v))
    log_a = math.log(abs(a))
    sgn = 1.0 if a > 0 else -1.0

    lo, hi = 0.0, max(d_max, 1e-300)

    def log_inc(d):
        return _log_sum(base + lv + log_abs_expm1(sgn * d * v))

    while log_inc(hi) < log_a:
        hi *= 2.0
    d = hi * 0.5
    for _ in range(200):
        val = log_inc(d) - log_a
        if abs(val) <= 1e-15:
            break
        if val < 0:
            lo = d
        else:
            hi = d
        slope = math.exp(_log_sum(base + 2.0 * lv + sgn * d * v) - log_inc(d))
        step = d - val / slope
        d = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4.0 * math.ulp(hi):
            break
    return sgn * d


def _log_sum(t) -> float:
    top = float(np.max(t))
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(t - top))))


def log_density_ratio(kernel: OuStationary, measure: LevyMeasure, x: float, a: float) -> LogDensityRatio:
    """log p(x + a) - log p(x) from saddle densities, and -a xi(x).

    With delta = xi(x + a) - xi(x) the difference is
    -a (xi + delta) + sum w e^{xi v} phi(delta v) - (log K(x + a) - log K(x)) / 2,
    phi(z) = e^z - 1 - z, which stays accurate when x + a and x agree to
    almost all digits.
    """
    if not isinstance(kernel, OuStationary):
        raise TypeError("shift ratios are defined for the stationary Ornstein-Uhlenbeck kernel")
    if not (x >= 0 and x + a >= 0):
        raise ValueError("need x >= 0 and x + a >= 0")
    sp = solve_saddle(kernel, measure, 1.0, x)
    if a == 0:
        return LogDensityRatio(0.0, 0.0, sp.xi)
    xi, xi_a = sp.xi, solve_saddle(kernel, measure, 1.0, x + a).xi
    nodes = effective_nodes(kernel, measure, 1.0, max(xi, xi_a) * (1.0 + 1e-6))
    v, logw = nodes.v, nodes.logw
    delta = _tilt_increment(v, logw, xi, a, max(abs(xi_a - xi), 1e-300))
    with np.errstate(divide="ignore"):
        log_curv = _log_sum(logw + xi * v + _backend.log_phi0(delta * v))
        log_k_new = _log_sum(logw + 2.0 * np.log(np.abs(v)) + (xi + delta) * v)
        log_k_old = _log_sum(logw + 2.0 * np.log(np.abs(v)) + xi * v)
    big_d_step = -a * (xi + delta) + math.exp(log_curv)
    log_exact = big_d_step - 0.5 * (log_k_new - log_k_old)
    return LogDensityRatio(log_exact, -a * xi, xi)


def density_ratio(kernel: OuStationary, measure: LevyMeasure, x: float, a: float) -> DensityRatio:
    lr = log_density_ratio(kernel, measure, x, a)
    return DensityRatio(math.exp(lr.log_exact), math.exp(lr.log_asymptotic))
