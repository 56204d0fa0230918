"""Closed-form tail constants, density envelopes, shift-ratio bounds and the Laplace tail helper.

Envelopes come in two parameterizations. The "theorem" form uses the time
scales of the self-similar kernel and constants relative to the measure's
constant divided by F, the supremum of the base kernel. The "corollary" form
uses the measure's constant itself with the kernel-specific prefactor x /
(Gamma(H + 1/2) t^{H - 1/2}) for fractional Levy motion and x for the Levy
process. The two agree when F = 1 and otherwise differ by a factor F^2 in the
exponent; both are exposed and tested separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._quad import integrate
from .kernel import FractionalLevy, Indicator, Kernel, OuStationary, ess_sup, self_similar_form
from .measure import ExpDamped, LevyMeasure, Truncated


def c2_beta(beta: float) -> float:
    """beta^{-1/(beta-1)} - beta^{-beta/(beta-1)}."""
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    return beta ** (-1.0 / (beta - 1.0)) - beta ** (-beta / (beta - 1.0))


def c_star(measure: LevyMeasure) -> float:
    tc = measure.tail_class
    if isinstance(tc, Truncated):
        return 1.0 / tc.sigma_plus
    if isinstance(tc, ExpDamped):
        return c2_beta(tc.beta) ** (-(tc.beta - 1.0) / tc.beta) * tc.b ** (1.0 / tc.beta)
    raise ValueError("the measure has no tail class")


@dataclass(frozen=True)
class EnvelopeSpec:
    """Exponent constants c2 < c_star < c1 and the tail regime (beta is None when truncated)."""

    c_star: float
    c1: float
    c2: float
    beta: Optional[float] = None
    form: str = "theorem"

    def __post_init__(self):
        if not (0 < self.c2 < self.c_star < self.c1):
            raise ValueError("need 0 < c2 < c_star < c1")
        if self.form not in ("theorem", "corollary"):
            raise ValueError("form must be 'theorem' or 'corollary'")

    @property
    def regime(self) -> str:
        return "truncated" if self.beta is None else "exp_damped"

    def log_factor(self, y):
        ly = np.log(y)
        return ly if self.beta is None else ly ** ((self.beta - 1.0) / self.beta)


def base_sup(kernel: Kernel) -> float:
    """Supremum of the base kernel of the self-similar form (the stationary kernel for OU)."""
    if isinstance(kernel, OuStationary):
        return 1.0
    form = self_similar_form(kernel)
    if form is None:
        raise ValueError(f"{type(kernel).__name__} has no envelope form")
    return ess_sup(form.base_kernel, 1.0)


def envelope_spec(kernel: Kernel, measure: LevyMeasure, upper: float = 1.1, lower: float = 0.9,
                  form: str = "theorem") -> EnvelopeSpec:
    """Constants c1 = upper * c, c2 = lower * c around the regime constant of the chosen form."""
    cs = c_star(measure)
    if form == "theorem":
        cs /= base_sup(kernel)
    tc = measure.tail_class
    beta = tc.beta if isinstance(tc, ExpDamped) else None
    return EnvelopeSpec(cs, upper * cs, lower * cs, beta, form)


def _scales(kernel: Kernel, t: float, form: str) -> tuple[float, float]:
    """(prefactor divisor, log-argument divisor) for x."""
    if isinstance(kernel, OuStationary):
        return 1.0, 1.0
    ss = self_similar_form(kernel)
    if ss is None:
        raise ValueError(f"{type(kernel).__name__} has no envelope form")
    chi, tau = ss.chi(t), ss.tau(t)
    if form == "corollary" and isinstance(kernel, FractionalLevy):
        return math.gamma(kernel.hurst + 0.5) * chi, tau
    return chi, tau


def envelope(kernel: Kernel, measure: LevyMeasure, spec: EnvelopeSpec, t: float, x: float) -> tuple[float, float]:
    """(log_lower, log_upper) = -(c1, c2) * (x / chi) * L(x / tau) in the spec's form."""
    pre, tau = _scales(kernel, float(t), spec.form)
    y = x / tau
    if not y > 1:
        raise ValueError("envelopes are tail statements: need x / tau(t) > 1")
    base = (x / pre) * float(spec.log_factor(y))
    return -spec.c1 * base, -spec.c2 * base


def locate_threshold(ys: Sequence[float], log_p: Sequence[float], log_lower: Sequence[float],
                     log_upper: Sequence[float]) -> Optional[float]:
    """Smallest grid point from which the sandwich holds at every larger sampled point."""
    ys = np.asarray(ys, dtype=float)
    ok = (np.asarray(log_lower) <= np.asarray(log_p)) & (np.asarray(log_p) <= np.asarray(log_upper))
    order = np.argsort(ys)
    ok = ok[order]
    if not ok[-1]:
        return None
    k = len(ok) - 1
    while k > 0 and ok[k - 1]:
        k -= 1
    return float(ys[order][k])


# --------------------------------------------------------------------------
# invariant density of the stationary OU process


def _regime(measure: LevyMeasure):
    tc = measure.tail_class
    if isinstance(tc, Truncated):
        return None
    if isinstance(tc, ExpDamped):
        return tc.beta
    raise ValueError("the measure has no tail class")


def _check_n3(measure: LevyMeasure):
    from .diagnostics import check_n3

    v = check_n3(measure.restricted(0.0, math.inf))
    if v.verdict == "fail":
        raise ValueError("the measure fails the infinite positive mass condition")


def invariant_density_bounds(measure: LevyMeasure, c1: float, c2: float, x: float,
                             verify: bool = False) -> tuple[float, float]:
    """(-c1 x L(x), -c2 x L(x)) with L = ln or ln^{(beta-1)/beta}; x > 1."""
    if not x > 1:
        raise ValueError("need x > 1")
    if not c2 < c1:
        raise ValueError("need c2 < c1")
    if verify:
        _check_n3(measure)
    beta = _regime(measure)
    lx = math.log(x)
    lf = lx if beta is None else lx ** ((beta - 1.0) / beta)
    return -c1 * x * lf, -c2 * x * lf


def ratio_bounds(measure: LevyMeasure, a: float, x: float, c1: Optional[float] = None,
                 c2: Optional[float] = None, verify: bool = False) -> tuple[float, float]:
    """Bounds on p(x + a) / p(x): x^{-c a} (truncated) or x^{-c a ln^{-1/beta} x}; c defaults to 1.1, 0.9 c_star."""
    if not x > 1:
        raise ValueError("need x > 1")
    if verify:
        _check_n3(measure)
    cs = c_star(measure)
    c1 = 1.1 * cs if c1 is None else c1
    c2 = 0.9 * cs if c2 is None else c2
    if not c2 < c1:
        raise ValueError("need c2 < c1")
    beta = _regime(measure)
    lx = math.log(x)
    scale = lx if beta is None else lx ** ((beta - 1.0) / beta)
    lo, hi = -c1 * a * scale, -c2 * a * scale
    return math.exp(min(lo, hi)), math.exp(max(lo, hi))


# --------------------------------------------------------------------------
# Laplace tail helper


class LaplaceAsym(NamedTuple):
    log_value: float
    exponent: float
    power: float
    log_c1: float


def laplace_exponent(beta: float, b: float, xi: float) -> float:
    # maximum of xi u - b u^beta; b enters with a negative power
    return c2_beta(beta) * b ** (-1.0 / (beta - 1.0)) * xi ** (beta / (beta - 1.0))


def laplace_power(beta: float, m: int) -> float:
    return (2.0 * m + 2.0 - beta) / (2.0 * (beta - 1.0))


def _peak(beta: float, b: float, xi: float) -> float:
    return (xi / (b * beta)) ** (1.0 / (beta - 1.0))


def laplace_integral_log(beta: float, b: float, m: int, xi: float, sigma: float) -> float:
    """log int_sigma^inf u^m e^{xi u - b u^beta} du by adaptive quadrature.

    The exponent is expanded about the maximizer p of xi u - b u^beta, where
    it equals xi p - b p^beta - b p^beta ((1 + r)^beta - 1 - beta r) with
    r = u / p - 1, so large xi costs no cancellation.
    """
    peak = _peak(beta, b, xi)
    bp = b * peak ** beta
    top = xi * peak - bp + (m * math.log(peak) if m else 0.0)
    width = 1.0 / math.sqrt(b * beta * (beta - 1.0) * peak ** (beta - 2.0))

    def shifted(u):
        r = np.asarray(u, dtype=float) / peak - 1.0
        out = -bp * (np.expm1(beta * np.log1p(r)) - beta * r)
        if m:
            out = out + m * np.log1p(r)
        return out

    def edge(direction):
        step = 8.0 * width
        while True:
            u = peak + direction * step
            if direction < 0 and u <= sigma:
                return sigma
            if float(shifted(np.array([u]))[0]) < -80.0:
                return u
            step *= 2.0

    lo = edge(-1.0) if peak > sigma else sigma
    hi = edge(1.0)
    if peak <= sigma:
        top += float(shifted(np.array([sigma]))[0])
        base = float(shifted(np.array([sigma]))[0])
    else:
        base = 0.0
    val, _ = integrate(lambda u: np.exp(shifted(u) - base)[:, None], lo, hi, rtol=1e-11, local=True, initial=32)
    return top + math.log(float(val[0]))


@lru_cache(maxsize=64)
def fitted_log_c1(beta: float, b: float, m: int, sigma: float = 1.0) -> float:
    """The Laplace constant, fitted once against quadrature deep in the asymptotic range."""
    xi = b * beta * (1e3 * max(sigma, 1.0)) ** (beta - 1.0)
    return laplace_integral_log(beta, b, m, xi, sigma) - laplace_exponent(beta, b, xi) - laplace_power(beta, m) * math.log(xi)


def laplace_integral_asym(beta: float, b: float, m: int, xi: float, sigma: float) -> LaplaceAsym:
    """Leading asymptotics of int_sigma^inf u^m e^{xi u - b u^beta} du for large xi."""
    if not beta > 1 or not b > 0 or not sigma > 0:
        raise ValueError("need beta > 1, b > 0, sigma > 0")
    if not _peak(beta, b, xi) > sigma:
        raise ValueError("xi too small: the integrand's maximizer must exceed sigma")
    exponent = laplace_exponent(beta, b, xi)
    power = laplace_power(beta, m)
    log_c1 = fitted_log_c1(float(beta), float(b), int(m), float(sigma))
    return LaplaceAsym(log_c1 + power * math.log(xi) + exponent, exponent, power, log_c1)


def laplace_c1_closed(beta: float, b: float, m: int) -> float:
    """Gaussian-approximation value of the constant, for cross-checks."""
    return (b * beta) ** (-laplace_power(beta, m)) * math.sqrt(2.0 * math.pi / (b * beta * (beta - 1.0)))
