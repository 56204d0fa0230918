"""Density by direct Fourier inversion along a tilted contour.

With the contour moved to Im z = -xi the inverse transform becomes

    p(x) = (1/pi) int_0^inf exp(R(eta)) cos(I(eta)) d eta,
    R(eta) = -xi x + M0(xi) - sum_j w_j e^{xi v_j} (1 - cos(eta v_j)),
    I(eta) = x eta - sum_j w_j (e^{xi v_j} sin(eta v_j) - eta v_j),

where (v_j, w_j) are the nodes of the image measure of ds x mu(du) under
(s, u) -> f(t, s) u. The value does not depend on the shift xi; choosing the
saddle point only removes the cancellation. The offset -xi x + M0(xi) is
computed here from the oracle's own nodes, so nothing from the asymptotic
formula enters the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from ._quad import integrate
from .errors import GateFailure, OverflowRange, QuadratureError
from .kernel import Kernel, effective_nodes, log_script_moment
from .measure import LevyMeasure, NodeSet
from .saddle import DensityEstimate, solve_saddle

ORACLE_RTOL = 1e-9
# the window starts at this many Gaussian widths and doubles
_START_WIDTHS = 8.0
_MAX_DOUBLINGS = 48
# a panel is split when I turns by more than this; a 15-point Kronrod panel
# integrates a full period of cos to about 1e-11
PHASE_SPLIT = 2.0 * math.pi


@dataclass(frozen=True)
class ContourIntegrand:
    """R and I along the line Im z = -xi, evaluated on a fixed node set."""

    t: float
    x: float
    xi: float
    r0: float
    nodes: NodeSet

    def __call__(self, eta):
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        a, b = _backend.contour_sums(self.nodes.v, self.nodes.logw, self.xi, eta)
        return self.r0 - a, self.x * eta - b

    def tail_bound(self, eta):
        """Decay functional restricted to positive nodes: R <= r0 - tail_bound."""
        pos, _ = self.nodes.split_sign()
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        a, _ = _backend.contour_sums(pos.v, pos.logw, self.xi, eta)
        return a


def _offset(nodes: NodeSet, x: float, xi: float) -> float:
    if xi == 0.0:
        return 0.0
    lm0 = _backend.log_moment(nodes.v, nodes.logw, float(xi), 0)
    if lm0 > 709.0:
        raise OverflowRange("tilted characteristic exponent exceeds the floating point range")
    return -xi * x + math.exp(lm0)


def _check_range(nodes: NodeSet, xi: float) -> None:
    if len(nodes) and float(np.max(nodes.logw + xi * nodes.v)) > 700.0:
        raise OverflowRange("tilted node weights exceed the floating point range")


def build_integrand(kernel: Kernel, measure: LevyMeasure, t: float, x: float, xi: float, freq: float) -> ContourIntegrand:
    nodes = effective_nodes(kernel, measure, t, xi, freq)
    _check_range(nodes, xi)
    return ContourIntegrand(float(t), float(x), float(xi), _offset(nodes, x, xi), nodes)


def contour_integrand(kernel: Kernel, measure: LevyMeasure, t: float, x: float, eta, shift: Optional[float] = None):
    """(R, I) at the given eta values; the shift defaults to the saddle point."""
    if x < 0:
        return contour_integrand(kernel, measure.reflected(), t, -x, eta, shift)
    xi = solve_saddle(kernel, measure, t, x).xi if shift is None else float(shift)
    eta_arr = np.atleast_1d(np.asarray(eta, dtype=float))
    ci = build_integrand(kernel, measure, t, x, xi, float(np.max(np.abs(eta_arr))) if eta_arr.size else 0.0)
    r, i = ci(np.abs(eta_arr))
    i = np.sign(eta_arr) * i
    if np.ndim(eta) == 0:
        return float(r[0]), float(i[0])
    return r, i


def tail_bound(kernel: Kernel, measure: LevyMeasure, t: float, x: float, eta, shift: Optional[float] = None):
    """sum over positive nodes of w e^{xi v} (1 - cos(eta v)); R <= R(0) minus this."""
    xi = solve_saddle(kernel, measure, t, x).xi if shift is None else float(shift)
    eta_arr = np.atleast_1d(np.asarray(eta, dtype=float))
    ci = build_integrand(kernel, measure, t, x, xi, float(np.max(np.abs(eta_arr))))
    out = ci.tail_bound(np.abs(eta_arr))
    return float(out[0]) if np.ndim(eta) == 0 else out


def _ring(ci: ContourIntegrand, a: float, b: float, rtol: float, atol: float, phase_split: float):
    """int_a^b of e^{R - r0} cos I and of e^{R - r0}, panels split where I turns by more than ``phase_split``."""

    def f(eta):
        r, i = ci(eta)
        mod = np.exp(r - ci.r0)
        return np.column_stack([mod * np.cos(i), mod, i])

    def must_split(edges, values):
        i = values[:, :, 2]
        return (np.max(i, axis=1) - np.min(i, axis=1)) > phase_split

    vals, err = integrate(f, a, b, rtol=rtol, atol=atol, ncols_err=1, must_split=must_split, initial=8)
    return float(vals[0]), float(vals[1]), err


def density_oracle(
    kernel: Kernel,
    measure: LevyMeasure,
    t: float,
    x: float,
    tol: float = ORACLE_RTOL,
    shift: Optional[float] = None,
    check_gate: bool = True,
    phase_split: float = PHASE_SPLIT,
) -> DensityEstimate:
    """Density at (t, x) by adaptive quadrature of the inverse Fourier integral.

    The window [0, W] starts at 8 K^{-1/2} and doubles; it stops once the
    modulus integral over the newest ring and the modulus at its end are
    both below ``tol`` times the accumulated value. Negative x is handled by
    reflecting the measure. ``shift`` overrides the contour position and
    ``phase_split`` the largest turn of I allowed inside one panel.
    """
    t, x = float(t), float(x)
    if check_gate:
        from .diagnostics import hw_gate

        verdict = hw_gate(kernel, measure, t)
        if verdict.verdict != "pass":
            raise GateFailure(
                f"Hartman-Wintner growth gate is '{verdict.verdict}' for this kernel and measure; "
                "the inversion integral is not known to converge",
                verdict,
            )
    if x < 0:
        meas = measure.reflected()
        x_eff = -x
        if shift is not None:
            shift = -shift
    else:
        meas, x_eff = measure, x
    if shift is None:
        sp = solve_saddle(kernel, meas, t, x_eff)
        xi, log_k = sp.xi, sp.log_big_k
    else:
        # the integrand's Gaussian width at an arbitrary shift is set by M2 there
        xi = float(shift)
        log_k = log_script_moment(kernel, meas, 2, t, xi).log
    width = _START_WIDTHS * math.exp(-0.5 * log_k)

    lo, hi = 0.0, width
    total = 0.0
    err_total = 0.0
    for _ in range(_MAX_DOUBLINGS):
        ci = build_integrand(kernel, meas, t, x_eff, xi, hi)
        atol = 0.05 * tol * abs(total)
        val, mod, err = _ring(ci, lo, hi, tol, atol, phase_split)
        total += val
        err_total += err
        r_end, _ = ci(np.array([hi]))
        end_mod = math.exp(float(r_end[0]) - ci.r0) * hi
        if total > 0 and mod <= tol * total and end_mod <= tol * total:
            rel = (err_total + mod) / total
            log_p = ci.r0 + math.log(total) - math.log(math.pi)
            return DensityEstimate.from_log(log_p, "oracle", rel)
        lo, hi = hi, 2.0 * hi
    raise QuadratureError(
        f"inversion window exceeded {_MAX_DOUBLINGS} doublings without the tail criterion",
        achieved=float(mod / abs(total)) if total else float("inf"),
    )
