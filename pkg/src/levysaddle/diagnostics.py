"""Numeric checks of the tail, non-degeneracy and smoothness conditions.

Every verdict is a statement about a finite grid: asymptotic conditions are
judged from fitted trends on the sampled range and say so in their evidence.
Verdicts are "pass", "fail" or "indeterminate".
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from . import _backend
from ._quad import integrate
from .errors import LevySaddleError, OverflowRange
from .kernel import (
    FractionalLevy,
    Indicator,
    Kernel,
    OuNonStationary,
    OuStationary,
    effective_nodes,
    ess_sup,
    kernel_nodes,
    support_length,
)
from .measure import (
    AbsContinuous,
    Atomic,
    LevyMeasure,
    measure_nodes,
    m_moment,
    tail_mass,
)

PASS, FAIL, INDETERMINATE = "pass", "fail", "indeterminate"
DEFAULT_DELTA = 0.1
DEFAULT_Z_MAX = 1e4
GAMMAS = (0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
# largest product node set the gate will build for atomic components
_NODE_BUDGET = 4_000_000


@dataclass
class Verdict:
    verdict: str
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "evidence": _jsonable(self.evidence)}


@dataclass
class ConditionReport:
    verdicts: dict
    kernel_class: str = ""

    def __getitem__(self, name: str) -> Verdict:
        return self.verdicts[name]

    def to_dict(self) -> dict:
        return {"kernel_class": self.kernel_class,
                "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def kernel_class(kernel: Kernel) -> str:
    """Smoothing class of a built-in kernel, F1 (weakest) to F4."""
    if isinstance(kernel, Indicator):
        return "F1"
    if isinstance(kernel, OuNonStationary):
        return "F1" if kernel.gamma == 0.0 else "F2"
    if isinstance(kernel, OuStationary):
        return "F3"
    if isinstance(kernel, FractionalLevy):
        return "F4"
    raise TypeError(f"unknown kernel {kernel!r}")


# --------------------------------------------------------------------------
# Theta


def theta(kernel: Kernel, measure: LevyMeasure, t: float, z: float, a_lo: float = 0.0, a_hi: float = math.inf) -> float:
    """sum over the image measure of (1 - cos(z v)) for v = f(t, s) u in (a_lo, a_hi]."""
    if not a_lo < a_hi:
        raise ValueError("need a_lo < a_hi")
    if z == 0.0:
        return 0.0
    nodes = effective_nodes(kernel, measure, t, 0.0, abs(z))
    sel = nodes.where((nodes.v > a_lo) & (nodes.v <= a_hi))
    if not len(sel):
        return 0.0
    return float(_backend.cos_sums(sel.v, sel.logw, np.array([abs(z)]))[0])


def _positive_part(measure: LevyMeasure) -> Optional[LevyMeasure]:
    return measure.restricted(0.0, math.inf)


def _density_transform(comp: AbsContinuous, y_max: float, per_decade: int = 50):
    """Grid of y, g(y) = int (1 - cos(y u)) rho(u) du and the log-log slope y g'(y) / g(y).

    Also returns the second moment, which gives the small-y law g ~ m2 y^2 / 2.
    """
    nodes = measure_nodes(LevyMeasure((comp,)), 0.0, y_max)
    pos = nodes.where(nodes.v > 0)
    w = np.exp(pos.logw)
    m2 = float(np.sum(w * pos.v ** 2))
    u_far = float(np.max(pos.v))
    y_lo = 1e-4 / u_far
    n = max(2, int(math.ceil(per_decade * math.log10(y_max / y_lo))) + 1)
    ys = np.geomspace(y_lo, y_max, n)
    gs = _backend.cos_sums(pos.v, pos.logw, ys)
    wu = w * pos.v
    step = max(1, 2_000_000 // max(pos.v.size, 1))
    dg = np.concatenate([np.sin(ys[i:i + step, None] * pos.v[None, :]) @ wu for i in range(0, n, step)])
    return ys, gs, ys * dg / gs, m2


def _loglog_hermite(lys, lgs, slopes, lx):
    """Cubic Hermite interpolation of log g at log y = lx, with exact end slopes per cell."""
    i = np.clip(np.searchsorted(lys, lx) - 1, 0, lys.size - 2)
    h = lys[i + 1] - lys[i]
    s = (lx - lys[i]) / h
    h00, h10 = (1 + 2 * s) * (1 - s) ** 2, s * (1 - s) ** 2
    h01, h11 = s * s * (3 - 2 * s), s * s * (s - 1)
    return h00 * lgs[i] + h10 * h * slopes[i] + h01 * lgs[i + 1] + h11 * h * slopes[i + 1]


def _theta_plus(kernel: Kernel, measure_pos: LevyMeasure, t: float, zs: np.ndarray) -> np.ndarray:
    """Theta(z, (0, inf)) on a grid of z > 0."""
    zs = np.asarray(zs, dtype=float)
    z_top = float(np.max(zs))
    if isinstance(kernel, Indicator):
        nodes = effective_nodes(kernel, measure_pos, t, 0.0, z_top)
        return _backend.cos_sums(nodes.v, nodes.logw, zs)
    out = np.zeros_like(zs)
    big_f = ess_sup(kernel, t)
    atoms = [c for c in measure_pos.components if isinstance(c, Atomic)]
    dens = [c for c in measure_pos.components if isinstance(c, AbsContinuous)]
    if atoms:
        part = LevyMeasure(tuple(atoms))
        pos, _ = part.atoms
        kn = kernel_nodes(kernel, t, 0.0, 0.0, z_top * float(np.max(pos)))
        if kn.f.size * pos.size > _NODE_BUDGET:
            raise OverflowRange(f"product node set of {kn.f.size * pos.size} nodes exceeds the budget")
        nodes = effective_nodes(kernel, part, t, 0.0, z_top)
        out += _backend.cos_sums(nodes.v, nodes.logw, zs)
    if dens:
        # resolve g(z f(s)) in s: z f moves by at most a few units per panel
        kn = kernel_nodes(kernel, t, 0.0, 0.0, z_top)
        w_s = np.exp(kn.logw)
        for comp in dens:
            ys, gs, slopes, m2 = _density_transform(comp, z_top * big_f)
            # g is close to a power of y, so interpolate in log-log coordinates
            lys, lgs = np.log(ys), np.log(gs)
            for j, z in enumerate(zs):
                y = z * kn.f
                small = y < ys[0]
                g = np.empty_like(y)
                g[small] = 0.5 * m2 * y[small] ** 2
                g[~small] = np.exp(_loglog_hermite(lys, lgs, slopes, np.log(y[~small])))
                out[j] += float(np.sum(w_s * g))
    return out


def _finite_positive_mass(measure_pos: LevyMeasure) -> tuple[bool, dict]:
    evidence = {}
    finite = True
    for i, c in enumerate(measure_pos.densities):
        if c.lo > 0:
            continue
        mass_inc = [_band_mass(c, 10.0 ** (-j - 1), 10.0 ** (-j)) for j in range(24)]
        trend = _decade_trend(mass_inc)
        evidence[f"density{i}_decade_mass_ratio"] = trend
        if trend is None or trend >= 0.5:
            finite = False
    return finite, evidence


def _band_mass(comp: AbsContinuous, a: float, b: float) -> float:
    a, b = max(a, comp.lo), min(b, comp.hi)
    if not a < b:
        return 0.0
    val, _ = integrate(lambda x: np.exp(comp.log_density(x))[:, None], a, b, rtol=1e-8, local=True)
    return float(val[0])


def _decade_trend(increments) -> Optional[float]:
    """Median ratio of consecutive nonzero decade increments over the last five."""
    inc = [x for x in increments if x > 0]
    if len(inc) < 4:
        return None
    tail = inc[-6:]
    return float(np.median([tail[i + 1] / tail[i] for i in range(len(tail) - 1)]))


def _slope(zs, vals) -> float:
    lz = np.log(zs)
    return float(np.polyfit(lz, vals, 1)[0])


def hw_check(kernel: Kernel, measure: LevyMeasure, t: float = 1.0, delta: float = DEFAULT_DELTA,
             z_max: float = DEFAULT_Z_MAX) -> Verdict:
    """Growth of Theta(z, (0, inf)) against ln z over the top decade below z_max."""
    pos = _positive_part(measure)
    if pos is None:
        return Verdict(FAIL, {"reason": "no mass on the positive half-line"})
    finite_mass, ev_mass = _finite_positive_mass(pos)
    bounded = finite_mass and math.isfinite(support_length(kernel, t))
    zs = np.geomspace(z_max / 10.0, z_max, 9)
    evidence = {"z": zs, "delta": delta, "kernel_class": kernel_class(kernel), **ev_mass}
    if bounded:
        mass = tail_mass(pos, float(np.nextafter(0.0, 1.0)))
        bound = 2.0 * support_length(kernel, t) * mass
        evidence.update(reason="finite positive mass and finite kernel support: Theta is bounded", theta_bound=bound)
        return Verdict(FAIL, evidence)
    try:
        th = _theta_plus(kernel, pos, t, zs)
    except (OverflowRange, LevySaddleError) as exc:
        evidence["reason"] = f"Theta could not be evaluated: {exc}"
        return Verdict(INDETERMINATE, evidence)
    slope = _slope(zs, th)
    evidence.update(theta=th, slope=slope, threshold=1.0 + delta)
    if slope >= 1.0 + delta:
        return Verdict(PASS, evidence)
    only_atoms = not pos.densities
    if only_atoms and kernel_class(kernel) in ("F3", "F4"):
        evidence["reason"] = "atomic noise with a smoothing kernel: slope below threshold on the sampled range"
        return Verdict(INDETERMINATE, evidence)
    evidence["reason"] = "fitted growth of Theta in ln z below 1 + delta"
    return Verdict(FAIL, evidence)


@lru_cache(maxsize=64)
def hw_gate(kernel: Kernel, measure: LevyMeasure, t: float = 1.0, delta: float = DEFAULT_DELTA,
            z_max: float = DEFAULT_Z_MAX) -> Verdict:
    """Cached oracle gate: pass iff Theta grows faster than (1 + delta) ln z."""
    return hw_check(kernel, measure, t, delta, z_max)


# --------------------------------------------------------------------------
# tail conditions


def _xi_grid(measure: LevyMeasure, n: int = 16) -> np.ndarray:
    sup = measure.positive_sup()
    scale = sup if math.isfinite(sup) and sup > 0 else 1.0
    return np.geomspace(1.0 / scale, 200.0 / scale, n)


def check_t1(measure: LevyMeasure) -> Verdict:
    xis = _xi_grid(measure)
    evidence = {"xi": xis, "gammas": GAMMAS}
    try:
        l4 = np.array([m_moment(measure, 4, x).log for x in xis])
        best = None
        for g in GAMMAS:
            l2 = np.array([m_moment(measure, 2, g * x).log for x in xis])
            d = l4 - 2.0 * l2
            half = d[len(d) // 2:]
            drop = float(half[0] - half[-1])
            decreasing = bool(np.all(np.diff(half) < 0))
            evidence[f"gamma_{g:g}"] = {"d_top_half": half, "drop": drop, "decreasing": decreasing}
            if decreasing and drop >= 10.0:
                best = g
                break
    except (OverflowRange, LevySaddleError) as exc:
        evidence["reason"] = str(exc)
        return Verdict(INDETERMINATE, evidence)
    if best is not None:
        evidence["gamma"] = best
        return Verdict(PASS, evidence)
    rising = all(evidence[f"gamma_{g:g}"]["drop"] < 0 for g in GAMMAS)
    return Verdict(FAIL if rising else INDETERMINATE, evidence)


def check_t2(measure: LevyMeasure) -> Verdict:
    xis = _xi_grid(measure)
    try:
        l2 = np.array([m_moment(measure, 2, x).log for x in xis])
        l4 = np.array([m_moment(measure, 4, x).log for x in xis])
    except (OverflowRange, LevySaddleError) as exc:
        return Verdict(INDETERMINATE, {"xi": xis, "reason": str(exc)})
    q = np.maximum(l4 - l2, 0.0) + np.log(np.maximum(l2, 1.0))
    ratio = q / xis
    half = ratio[len(ratio) // 2:]
    evidence = {"xi": xis, "q_over_xi": ratio}
    if np.all(np.diff(half) <= 1e-12 * np.abs(half[:-1])) and half[-1] <= 0.5 * half[0]:
        return Verdict(PASS, evidence)
    if half[-1] >= half[0]:
        return Verdict(FAIL, evidence)
    return Verdict(INDETERMINATE, evidence)


# --------------------------------------------------------------------------
# non-degeneracy conditions


def _atom_decades(pos_atoms: np.ndarray) -> int:
    if pos_atoms.size == 0:
        return 0
    return len({int(math.floor(math.log10(p))) for p in pos_atoms})


def _small_power_integral(comp: AbsContinuous, hi: float, power: float) -> float:
    """int over (0, hi] of u^power rho(u) du, by dyadic bands toward 0."""
    hi = min(hi, comp.hi)
    if hi <= max(comp.lo, 0.0):
        return 0.0
    total = 0.0
    b = hi
    for _ in range(400):
        a = 0.5 * b
        if b <= comp.lo:
            break
        val, _ = integrate(lambda x: (x ** power * np.exp(comp.log_density(x)))[:, None], max(a, comp.lo), b, rtol=1e-9, local=True)
        piece = float(val[0])
        total += piece
        if piece <= 1e-13 * total:
            return total
        b = a
    return math.inf


def _kallenberg(pos: LevyMeasure, z: float) -> float:
    """z^2 int_{u < 1/z} u^2 mu(du) over the positive part."""
    atoms, masses = pos.atoms
    val = float(np.sum(masses[atoms < 1.0 / z] * atoms[atoms < 1.0 / z] ** 2)) if atoms.size else 0.0
    for c in pos.densities:
        val += _small_power_integral(c, 1.0 / z, 2.0)
    return z * z * val


def _kul(pos: LevyMeasure, z: float) -> float:
    """int [(u z)^2 ^ 1] mu(du) over the positive part."""
    return _kallenberg(pos, z) + tail_mass(pos, 1.0 / z)


def _growth_verdict(zs, vals, name: str) -> Verdict:
    r = np.asarray(vals) / np.log(zs)
    evidence = {"z": zs, name: vals, "ratio_to_ln_z": r}
    if not np.all(np.isfinite(r)):
        return Verdict(PASS, {**evidence, "reason": "integral diverges"})
    if r[-1] <= 0.0 or r[-1] <= r[0]:
        return Verdict(FAIL, evidence)
    if r[-1] >= 1.5 * r[0]:
        return Verdict(PASS, evidence)
    return Verdict(INDETERMINATE, evidence)


def _z_range(pos: LevyMeasure, z_max: float) -> tuple[np.ndarray, dict]:
    atoms, _ = pos.atoms
    ev = {}
    if not pos.densities and _atom_decades(atoms) >= 3:
        # a truncated atomic series: stay above its resolution
        cap = 0.1 / float(np.min(atoms))
        if cap < z_max:
            ev["z_cap"] = cap
            ev["reason_cap"] = "atomic series truncated at its smallest atom"
            z_max = cap
    return np.geomspace(z_max / 10.0, z_max, 9), ev


def check_n1(pos: Optional[LevyMeasure], z_max: float = DEFAULT_Z_MAX) -> Verdict:
    if pos is None:
        return Verdict(FAIL, {"reason": "no positive mass"})
    zs, ev = _z_range(pos, z_max)
    v = _growth_verdict(zs, [_kallenberg(pos, z) for z in zs], "kallenberg_integral")
    v.evidence.update(ev)
    return v


def check_n2(pos: Optional[LevyMeasure], z_max: float = DEFAULT_Z_MAX) -> Verdict:
    if pos is None:
        return Verdict(FAIL, {"reason": "no positive mass"})
    zs, ev = _z_range(pos, z_max)
    v = _growth_verdict(zs, [_kul(pos, z) for z in zs], "truncated_square_integral")
    v.evidence.update(ev)
    return v


def check_n3(pos: Optional[LevyMeasure]) -> Verdict:
    if pos is None:
        return Verdict(FAIL, {"reason": "no positive mass"})
    evidence = {}
    diverging, undecided = False, False
    for i, c in enumerate(pos.densities):
        if c.lo > 0:
            evidence[f"density{i}"] = "support bounded away from 0: finite mass"
            continue
        mass_inc = [_band_mass(c, 10.0 ** (-j - 1), 10.0 ** (-j)) for j in range(24)]
        trend = _decade_trend(mass_inc)
        evidence[f"density{i}_decade_mass_ratio"] = trend
        if trend is not None and trend >= 0.9:
            diverging = True
        elif trend is not None and trend > 0.5:
            undecided = True
    atoms, masses = pos.atoms
    if atoms.size:
        decades = _atom_decades(atoms)
        evidence["atom_decades"] = decades
        if decades >= 3:
            edges = sorted({int(math.floor(math.log10(p))) for p in atoms})
            inc = [float(np.sum(masses[(atoms >= 10.0 ** e) & (atoms < 10.0 ** (e + 1))])) for e in reversed(edges)]
            # drop the partially filled smallest decade of a truncated series
            trend = _decade_trend(inc[:-1] if len(inc) > 3 else inc)
            evidence["atom_decade_mass_ratio"] = trend
            if trend is not None and trend >= 0.9:
                diverging = True
            elif trend is not None and trend > 0.5:
                undecided = True
    if diverging:
        return Verdict(PASS, evidence)
    return Verdict(INDETERMINATE if undecided else FAIL, evidence)


def check_n4(measure: LevyMeasure) -> Verdict:
    pos = _positive_part(measure)
    if pos is None:
        return Verdict(FAIL, {"positive_mass": 0.0})
    atoms, masses = pos.atoms
    return Verdict(PASS, {"atomic_positive_mass": float(np.sum(masses)), "positive_densities": len(pos.densities)})


def _commensurable(positions) -> Optional[float]:
    """Common period of the characteristic function when all positions are rational multiples."""
    p0 = positions[0]
    denominators = []
    for p in positions:
        fr = Fraction(p / p0).limit_denominator(1000)
        if abs(float(fr) - p / p0) > 1e-12 * abs(p / p0):
            return None
        denominators.append(fr.denominator)
    lcm = 1
    for d in denominators:
        lcm = lcm * d // math.gcd(lcm, d)
    return 2.0 * math.pi * lcm / abs(p0)


def check_c(measure: LevyMeasure, z_max: float = DEFAULT_Z_MAX) -> Verdict:
    pos = _positive_part(measure)
    if pos is None:
        return Verdict(FAIL, {"reason": "no positive mass"})
    if pos.densities:
        return Verdict(PASS, {"reason": "absolutely continuous component on the positive half-line"})
    atoms, masses = pos.atoms
    rho = float(np.max(atoms)) / 2.0
    keep = atoms >= rho
    a, m = atoms[keep], masses[keep]
    evidence = {"rho": rho, "atoms_above_rho": int(a.size), "mass_above_rho": float(np.sum(m)),
                "reason": "finitely many atoms above rho: the characteristic function is almost periodic"}
    period = _commensurable(list(a))
    if period is not None:
        phi = abs(complex(np.sum(m * np.exp(1j * period * a))))
        evidence.update(period=period, modulus_at_period=phi)
    zs = np.geomspace(1.0, z_max, 2000)
    mods = np.abs(np.exp(1j * np.outer(zs, a)) @ m)
    evidence["sampled_sup_modulus_ratio"] = float(np.max(mods) / np.sum(m))
    return Verdict(FAIL, evidence)


def run_condition_report(kernel: Kernel, measure: LevyMeasure, t: float = 1.0,
                         delta: float = DEFAULT_DELTA, z_max: float = DEFAULT_Z_MAX) -> ConditionReport:
    pos = _positive_part(measure)
    verdicts = {
        "T1": check_t1(measure),
        "T2": check_t2(measure),
        "N1": check_n1(pos, z_max),
        "N2": check_n2(pos, z_max),
        "N3": check_n3(pos),
        "N4": check_n4(measure),
        "C": check_c(measure, z_max),
    }
    hw = hw_gate(kernel, measure, float(t), delta, z_max)
    verdicts["HW_plus"] = hw
    verdicts["gate"] = Verdict(hw.verdict, {"source": "HW_plus", "t": float(t)})
    return ConditionReport(verdicts, kernel_class(kernel))
