"""Levy measures with exponential moments and their moment functions.

A measure is a finite list of components (atoms or densities) plus a declared
tail class. All integrals against the measure go through ``NodeSet`` objects:
atoms enter exactly, densities through Kronrod nodes on a partition refined
for a given range of exponential tilts and, optionally, oscillation
frequencies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from . import _backend
from ._quad import graded_edges, integrate, nodes_from_partition, refine_partition
from .errors import OverflowRange

NODE_RTOL = 1e-13
# radians of oscillation allowed across one 15-point Kronrod panel (error ~ 3^23/23!)
PANEL_PHASE = 6.0
# columns falling this far (in log units) below their peak are dropped
_LOG_CUTOFF = 60.0


@dataclass(frozen=True)
class Truncated:
    sigma_plus: float

    def __post_init__(self):
        if not self.sigma_plus > 0:
            raise ValueError("sigma_plus must be positive")


@dataclass(frozen=True)
class ExpDamped:
    b: float
    beta: float
    q_degree: int = 0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("b must be positive")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if self.q_degree < 0:
            raise ValueError("q_degree must be nonnegative")


TailClass = Union[Truncated, ExpDamped]


class LogReal(NamedTuple):
    """A real number stored as sign and log-magnitude."""

    sign: int
    log: float

    @property
    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log > 709.78:
            return self.sign * math.inf
        return self.sign * math.exp(self.log)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class Atomic:
    positions: tuple
    masses: tuple

    def __post_init__(self):
        pos = tuple(float(p) for p in self.positions)
        mas = tuple(float(m) for m in self.masses)
        if len(pos) != len(mas) or not pos:
            raise ValueError("atoms need matching, nonempty positions and masses")
        if any(p == 0.0 or not math.isfinite(p) for p in pos):
            raise ValueError("atom positions must be finite and nonzero")
        if len(set(pos)) != len(pos):
            raise ValueError("atom positions must be distinct")
        if any(not (m > 0 and math.isfinite(m)) for m in mas):
            raise ValueError("atom masses must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", mas)

    @classmethod
    def series(cls, rho: float, n_max: int) -> "Atomic":
        """sum_{n <= n_max} n^rho delta_{1/n}."""
        n = np.arange(1, n_max + 1, dtype=float)
        return cls(tuple(1.0 / n), tuple(n ** rho))

    def reflected(self) -> "Atomic":
        return Atomic(tuple(-p for p in self.positions), self.masses)


@dataclass(frozen=True, eq=False)
class AbsContinuous:
    """Density component on [lo, hi] given through its logarithm.

    ``log_density`` must accept and return NumPy arrays. ``key`` identifies the
    density for caching and equality; components without a key compare by
    identity.
    """

    log_density: Callable[[np.ndarray], np.ndarray]
    lo: float
    hi: float
    key: Optional[tuple] = None
    label: str = ""

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("density support must satisfy lo < hi")

    def __eq__(self, other):
        if not isinstance(other, AbsContinuous):
            return NotImplemented
        if self.key is not None and other.key is not None:
            return self.key == other.key and self.lo == other.lo and self.hi == other.hi
        return self is other

    def __hash__(self):
        if self.key is not None:
            return hash(("AbsContinuous", self.key, self.lo, self.hi))
        return id(self)

    @classmethod
    def from_density(cls, density: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, label: str = "") -> "AbsContinuous":
        def logd(u):
            with np.errstate(divide="ignore"):
                return np.log(np.asarray(density(u), dtype=float))

        return cls(logd, lo, hi, None, label)

    def density(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        inside = (u >= self.lo) & (u <= self.hi)
        out[inside] = np.exp(self.log_density(u[inside]))
        return out

    def reflected(self) -> "AbsContinuous":
        f = self.log_density
        key = None if self.key is None else ("reflected",) + tuple(self.key)
        return AbsContinuous(lambda u: f(-np.asarray(u)), -self.hi, -self.lo, key, self.label + "[reflected]")

    def restricted(self, lo: float, hi: float) -> Optional["AbsContinuous"]:
        a, b = max(lo, self.lo), min(hi, self.hi)
        if not a < b:
            return None
        return AbsContinuous(self.log_density, a, b, self.key, self.label)


def power_exp_density(coef: float, power: float, b: float = 0.0, beta: float = 1.0,
                      lo: float = 0.0, hi: float = math.inf) -> AbsContinuous:
    """Density coef * |u|^power * exp(-b |u|^beta) on [lo, hi]."""
    if coef <= 0:
        raise ValueError("coef must be positive")
    lc = math.log(coef)

    def logd(u):
        au = np.abs(np.asarray(u, dtype=float))
        with np.errstate(divide="ignore"):
            out = lc + power * np.log(au)
        if b:
            out = out - b * au ** beta
        return out

    label = f"{coef:g}*|u|^{power:g}*exp(-{b:g}|u|^{beta:g})"
    return AbsContinuous(logd, float(lo), float(hi), ("power_exp", coef, power, b, beta), label)


MeasureComponent = Union[Atomic, AbsContinuous]


@dataclass(frozen=True)
class LevyMeasure:
    components: tuple
    tail_class: Optional[TailClass] = None

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a measure needs at least one component")
        object.__setattr__(self, "components", comps)

    @property
    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        pos, mas = [], []
        for c in self.components:
            if isinstance(c, Atomic):
                pos.extend(c.positions)
                mas.extend(c.masses)
        return np.array(pos, dtype=float), np.array(mas, dtype=float)

    @property
    def densities(self) -> tuple:
        return tuple(c for c in self.components if isinstance(c, AbsContinuous))

    def reflected(self) -> "LevyMeasure":
        """The image under u -> -u; its tail class is left unspecified."""
        return LevyMeasure(tuple(c.reflected() for c in self.components), None)

    def restricted(self, lo: float, hi: float) -> Optional["LevyMeasure"]:
        """Restriction to the closed set [lo, hi] (atoms) / (lo, hi) (densities)."""
        comps = []
        for c in self.components:
            if isinstance(c, Atomic):
                keep = [(p, m) for p, m in zip(c.positions, c.masses) if lo <= p <= hi]
                if keep:
                    comps.append(Atomic(tuple(p for p, _ in keep), tuple(m for _, m in keep)))
            else:
                r = c.restricted(lo, hi)
                if r is not None:
                    comps.append(r)
        if not comps:
            return None
        return LevyMeasure(tuple(comps), self.tail_class)

    def positive_sup(self) -> float:
        """Supremum of the support on (0, inf); 0 when there is no positive part."""
        top = 0.0
        for c in self.components:
            if isinstance(c, Atomic):
                top = max([top] + [p for p in c.positions if p > 0])
            elif c.hi > 0:
                top = max(top, c.hi)
        return top


# --------------------------------------------------------------------------
# node sets


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Weighted nodes: sum_i exp(logw_i) g(v_i) approximates the integral of g."""

    v: np.ndarray
    logw: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.ascontiguousarray(self.v, dtype=float))
        object.__setattr__(self, "logw", np.ascontiguousarray(self.logw, dtype=float))

    def __len__(self) -> int:
        return self.v.size

    def split_sign(self) -> tuple["NodeSet", "NodeSet"]:
        pos = self.v > 0
        return NodeSet(self.v[pos], self.logw[pos]), NodeSet(self.v[~pos], self.logw[~pos])

    def where(self, mask: np.ndarray) -> "NodeSet":
        return NodeSet(self.v[mask], self.logw[mask])

    def effective_extent(self, tilt: float) -> float:
        """Largest |v| carrying non-negligible tilted weight."""
        if not len(self):
            return 0.0
        lw = self.logw + 2.0 * np.log(np.abs(self.v) + 1e-300) + tilt * self.v
        keep = lw >= np.max(lw) - _LOG_CUTOFF
        return float(np.max(np.abs(self.v[keep])))

    @staticmethod
    def concat(sets) -> "NodeSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return NodeSet(np.zeros(0), np.zeros(0))
        return NodeSet(np.concatenate([s.v for s in sets]), np.concatenate([s.logw for s in sets]))


def tilt_bucket(tilt: float) -> float:
    """Quantize a tilt upward so nearby tilts share a node set."""
    a = abs(tilt)
    if a == 0.0:
        return 0.0
    level = max(math.ceil(2.0 * math.log2(a)), -4)
    return math.copysign(2.0 ** (level / 2.0), tilt)


def freq_bucket(freq: float) -> float:
    a = abs(freq)
    if a == 0.0:
        return 0.0
    return 2.0 ** max(math.ceil(math.log2(a)), 0)


def _scan_far_end(logrho, start: float, direction: float, tilts, limit: float) -> float:
    """First point past which every tilted column sits below its peak minus the cutoff."""
    best = -math.inf
    u = max(abs(start), 1e-3)
    prev = None
    grow = 2.0 ** 0.25
    for _ in range(4000):
        x = direction * u
        base = float(logrho(np.array([x]))[0]) + 4.0 * math.log(u)
        vals = [base + t * x for t in tilts]
        top = max(vals)
        best = max(best, top)
        if prev is not None and top < best - _LOG_CUTOFF and top <= prev:
            return x
        prev = top
        u *= grow
        if u > limit:
            break
    raise OverflowRange("density tail does not decay fast enough for the requested tilt")


def _zero_depth(logrho, end: float, scale: float, log_ref: float) -> int:
    """Grading depth toward 0 so that the omitted piece is negligible."""
    sgn = math.copysign(1.0, end)
    for d in range(30, 1000):
        eps = abs(end) * 2.0 ** (-d)
        val = float(logrho(np.array([sgn * eps]))[0])
        if 3.0 * math.log(eps) + val + scale < log_ref - 40.0:
            return d
    return 1000


def _density_piece_nodes(comp: AbsContinuous, a: float, b: float, tilt: float, freq: float) -> NodeSet:
    logrho = comp.log_density
    taus = sorted({0.0, tilt} | {tilt * f for f in (1 / 16, 1 / 8, 1 / 4, 3 / 8, 1 / 2, 5 / 8, 3 / 4, 7 / 8)})
    positive = b > 0
    if positive and math.isinf(b):
        b = _scan_far_end(logrho, max(a, 1.0), 1.0, (0.0, tilt), 1e12)
    if not positive and math.isinf(a):
        a = _scan_far_end(logrho, min(b, -1.0), -1.0, (0.0, tilt), 1e12)
    if (positive and a == 0.0) or (not positive and b == 0.0):
        end = b if positive else a
        grid = np.abs(end) * 2.0 ** -np.arange(0, 60, 0.5)
        with np.errstate(divide="ignore", invalid="ignore"):
            probe = logrho(np.sign(end) * grid) + 3.0 * np.log(grid)
        log_ref = float(np.max(probe[np.isfinite(probe)])) if np.isfinite(probe).any() else 0.0
        scale = 2.0 * math.log(max(1.0, abs(tilt), freq))
        depth = _zero_depth(logrho, end, scale, log_ref)
        edges = graded_edges(a, b, "a" if positive else "b", depth)
    else:
        edges = graded_edges(a, b, "both", 8)

    def log_eval(u):
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = logrho(u)
            lu = np.log(np.abs(u))
            cols = []
            for t in taus:
                z = t * u
                if t != 0.0:
                    cols.append(lr + _backend.log_phi0(z))
                cols.append(lr + 2.0 * lu + z)
                cols.append(lr + 4.0 * lu + z)
            out = np.column_stack(cols)
        out[~np.isfinite(out)] = -np.inf
        return out

    max_width = None
    if freq > 0:
        def max_width(e):
            return (e[:, 1] - e[:, 0]) * freq > PANEL_PHASE

    edges = refine_partition(edges, log_eval, NODE_RTOL, max_width=max_width)
    x, w = nodes_from_partition(edges)
    with np.errstate(divide="ignore"):
        lw = np.log(w) + logrho(x)
    keep = np.isfinite(lw)
    return NodeSet(x[keep], lw[keep])


@lru_cache(maxsize=128)
def _component_nodes(comp: MeasureComponent, tilt: float, freq: float) -> NodeSet:
    if isinstance(comp, Atomic):
        return NodeSet(np.array(comp.positions), np.log(np.array(comp.masses)))
    pieces = []
    if comp.lo < 0:
        pieces.append(_density_piece_nodes(comp, comp.lo, min(comp.hi, 0.0), tilt, freq))
    if comp.hi > 0:
        pieces.append(_density_piece_nodes(comp, max(comp.lo, 0.0), comp.hi, tilt, freq))
    return NodeSet.concat(pieces)


def measure_nodes(measure: LevyMeasure, tilt: float = 0.0, freq: float = 0.0) -> NodeSet:
    """Node set integrating tilted moments up to ``tilt`` and oscillations up to ``freq``."""
    tb, fb = tilt_bucket(tilt), freq_bucket(freq)
    return NodeSet.concat([_component_nodes(c, tb, fb) for c in measure.components])


# --------------------------------------------------------------------------
# moments


def log_moment_nodes(nodes: NodeSet, k: int, xi: float) -> LogReal:
    """Signed log of sum w g_k(v, xi) with g_0 = e^z-1-z, g_1 = v(e^z-1), g_k = v^k e^z."""
    if k in (0, 1) or k % 2 == 0:
        lm = _backend.log_moment(nodes.v, nodes.logw, float(xi), int(k))
        if lm == -math.inf:
            return LogReal(0, -math.inf)
        sign = -1 if (k == 1 and xi < 0) else 1
        return LogReal(sign, lm)
    pos, neg = nodes.split_sign()
    lp = _backend.log_moment(pos.v, pos.logw, float(xi), int(k))
    ln = _backend.log_moment(neg.v, neg.logw, float(xi), int(k))
    if lp == ln:
        return LogReal(0, -math.inf)
    if lp > ln:
        return LogReal(1, lp + math.log1p(-math.exp(ln - lp)))
    return LogReal(-1, ln + math.log1p(-math.exp(lp - ln)))


def m_moment(measure: LevyMeasure, k: int, xi: float) -> Union[float, LogReal]:
    """Exponential moment function of the measure.

    k = 0: int (e^{xi u} - 1 - xi u) mu(du); k = 1: int u (e^{xi u} - 1) mu(du);
    k >= 2: int u^k e^{xi u} mu(du). For k >= 2 the result is a ``LogReal``;
    for k = 0, 1 a float, with ``OverflowRange`` raised when it is not
    representable.
    """
    if k not in (0, 1, 2, 3, 4):
        raise ValueError("k must be in 0..4")
    if not math.isfinite(xi):
        raise ValueError("xi must be finite")
    lr = log_moment_nodes(measure_nodes(measure, xi), k, xi)
    if k >= 2:
        return lr
    if lr.log > 709.78:
        raise OverflowRange(f"M_{k}({xi}) exceeds the floating point range (log = {lr.log:.6g})")
    return lr.value


def tail_mass(measure: LevyMeasure, u: float) -> float:
    """mu([u, inf)) for u > 0; atoms sitting exactly at u count."""
    if not u > 0:
        raise ValueError("u must be positive")
    total = 0.0
    for c in measure.components:
        if isinstance(c, Atomic):
            total += sum(m for p, m in zip(c.positions, c.masses) if p >= u)
            continue
        a = max(u, c.lo)
        if a >= c.hi:
            continue
        b = c.hi
        if math.isinf(b):
            b = _scan_far_end(c.log_density, max(a, 1.0), 1.0, (0.0,), 1e12)
        if a >= b:
            continue
        val, _ = integrate(lambda x: np.exp(c.log_density(x))[:, None], a, b, rtol=1e-12, local=True)
        total += float(val[0])
    return total


# --------------------------------------------------------------------------
# validation


@dataclass
class Check:
    name: str
    passed: bool
    evidence: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "evidence": c.evidence} for c in self.checks}


def _band_integral(comp: AbsContinuous, a: float, b: float, power: float) -> float:
    a, b = max(a, comp.lo), min(b, comp.hi)
    if not a < b:
        return 0.0
    val, _ = integrate(lambda x: (np.abs(x) ** power * np.exp(comp.log_density(x)))[:, None], a, b, rtol=1e-10, local=True)
    return float(val[0])


def small_jump_increments(comp: AbsContinuous, sign: float = 1.0, decades: int = 30) -> list:
    """int u^2 rho over the decade bands sign*[10^{-j-1}, 10^{-j}], j = 0..decades-1."""
    out = []
    for j in range(decades):
        lo, hi = 10.0 ** (-j - 1), 10.0 ** (-j)
        if sign > 0:
            out.append(_band_integral(comp, lo, hi, 2.0))
        else:
            out.append(_band_integral(comp, -hi, -lo, 2.0))
    return out


def _diverges(increments: list) -> tuple[bool, float]:
    inc = [x for x in increments if x > 0]
    if len(inc) < 6:
        return False, 0.0
    tail = inc[-5:]
    ratios = [tail[i + 1] / tail[i] for i in range(len(tail) - 1)]
    r = float(np.median(ratios))
    return r >= 0.95, r


def validate(measure: LevyMeasure) -> ValidationReport:
    """Check positivity of the positive part, Levy integrability and tail-class consistency."""
    checks = []
    pos_atoms = sum(m for c in measure.components if isinstance(c, Atomic)
                    for p, m in zip(c.positions, c.masses) if p > 0)
    pos_density = any(c.hi > 0 for c in measure.densities)
    checks.append(Check("positive_mass", pos_atoms > 0 or pos_density,
                        {"atomic_mass_on_positive_axis": pos_atoms, "density_on_positive_axis": pos_density}))

    integrable = True
    evidence = {}
    for i, c in enumerate(measure.densities):
        for sgn, tag in ((1.0, "right"), (-1.0, "left")):
            near = (c.lo <= 0 < c.hi) if sgn > 0 else (c.lo < 0 <= c.hi)
            if not near:
                continue
            inc = small_jump_increments(c, sgn)
            div, r = _diverges(inc)
            evidence[f"density{i}_{tag}_decade_ratio"] = r
            if div:
                integrable = False
        for sgn in (1.0, -1.0):
            a, b = (1.0, c.hi) if sgn > 0 else (c.lo, -1.0)
            if a >= b:
                continue
            try:
                end_b = b if math.isfinite(b) else _scan_far_end(c.log_density, a, 1.0, (0.0,), 1e12)
                end_a = a if math.isfinite(a) else _scan_far_end(c.log_density, b, -1.0, (0.0,), 1e12)
                evidence[f"density{i}_large_jump_mass_{'right' if sgn > 0 else 'left'}"] = _band_integral(c, end_a, end_b, 0.0)
            except OverflowRange:
                integrable = False
                evidence[f"density{i}_large_jump_mass"] = "divergent"
    checks.append(Check("levy_integrability", integrable, evidence))

    tc = measure.tail_class
    if tc is None:
        checks.append(Check("tail_class", False, {"reason": "no tail class declared"}))
    elif isinstance(tc, Truncated):
        sup = measure.positive_sup()
        ok = math.isfinite(sup) and abs(sup - tc.sigma_plus) <= 1e-12 * max(1.0, tc.sigma_plus)
        checks.append(Check("tail_class", ok, {"support_sup": sup, "sigma_plus": tc.sigma_plus}))
    else:
        ok = True
        ev = {}
        for i, c in enumerate(measure.densities):
            if not math.isinf(c.hi):
                continue
            u = np.geomspace(max(c.lo, 1.0) + 1.0, max(c.lo, 1.0) + 40.0, 40)
            g = c.log_density(u) + tc.b * u ** tc.beta - tc.q_degree * np.log(u)
            growth = float(g[-1] - np.max(g[: len(g) // 2]))
            ev[f"density{i}_excess_log_growth"] = growth
            ok &= growth <= 1e-6 * max(1.0, abs(float(g[-1])))
        checks.append(Check("tail_class", ok, ev))
    return ValidationReport(checks)
