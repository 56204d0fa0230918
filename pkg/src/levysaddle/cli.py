"""Batch command line: JSON config in, CSV plus a JSON metadata sidecar out.

    levysaddle <command> --config <path> [--out <dir>] [--tol <r>] [--jobs <n>]

Commands are density, compare, ratio, bounds and check. Exit codes: 0 success,
2 configuration error, 3 gate failure, 4 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__, _backend
from .errors import ConfigError, GateFailure, NonConvergence
from .kernel import FractionalLevy, Indicator, OuNonStationary, OuStationary
from .measure import Atomic, ExpDamped, LevyMeasure, Truncated, power_exp_density, validate

EXIT_OK, EXIT_CONFIG, EXIT_GATE, EXIT_NONCONVERGENCE = 0, 2, 3, 4
COMMANDS = ("density", "compare", "ratio", "bounds", "check")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


# ----------------------------------------------------------------- measure


class AtomsSpec(_Strict):
    type: Literal["atoms"]
    positions: list[float] = Field(min_length=1)
    masses: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _shape(self):
        if len(self.positions) != len(self.masses):
            raise ValueError("positions and masses must have equal length")
        return self


class SeriesSpec(_Strict):
    """sum_{n <= n_max} n^rho delta_{1/n}."""

    type: Literal["series"]
    rho: float
    n_max: int = Field(ge=1, le=10_000_000)


class PowerExpSpec(_Strict):
    """Density coef |u|^power exp(-b |u|^beta) on [lo, hi]; null bounds are infinite."""

    type: Literal["power_exp"]
    coef: float = Field(gt=0)
    power: float
    b: float = Field(default=0.0, ge=0)
    beta: float = Field(default=1.0, gt=0)
    lo: Optional[float] = 0.0
    hi: Optional[float] = None


ComponentSpec = Annotated[Union[AtomsSpec, SeriesSpec, PowerExpSpec], Field(discriminator="type")]


class TruncatedSpec(_Strict):
    type: Literal["truncated"]
    sigma_plus: float = Field(gt=0)


class ExpDampedSpec(_Strict):
    type: Literal["exp_damped"]
    b: float = Field(gt=0)
    beta: float
    q_degree: int = Field(default=0, ge=0)

    @field_validator("beta")
    @classmethod
    def _beta(cls, v):
        if not v > 1:
            raise ValueError(f"damping exponent beta = {v} must exceed 1")
        return v


TailSpec = Annotated[Union[TruncatedSpec, ExpDampedSpec], Field(discriminator="type")]


class MeasureSpec(_Strict):
    components: list[ComponentSpec] = Field(min_length=1)
    tail_class: Optional[TailSpec] = None


# ------------------------------------------------------------------ kernel


class IndicatorSpec(_Strict):
    type: Literal["indicator"]


class OuSpec(_Strict):
    type: Literal["ou"]
    gamma: float


class OuStationarySpec(_Strict):
    type: Literal["ou_stationary"]
    gamma: float

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, v):
        if not v < 0:
            raise ValueError(f"gamma = {v} is not admissible; the stationary kernel needs gamma < 0")
        return v


class FractionalLevySpec(_Strict):
    type: Literal["fractional_levy"]
    hurst: float

    @field_validator("hurst")
    @classmethod
    def _hurst(cls, v):
        if not 0.5 < v < 1.0:
            raise ValueError(f"hurst = {v} is outside the admissible range (1/2, 1)")
        return v


KernelSpec = Annotated[Union[IndicatorSpec, OuSpec, OuStationarySpec, FractionalLevySpec], Field(discriminator="type")]


# ------------------------------------------------------------------- grids


class GeomGrid(_Strict):
    geom: tuple[float, float, int]

    @field_validator("geom")
    @classmethod
    def _positive(cls, v):
        if not (v[0] > 0 and v[1] > 0 and v[2] >= 1):
            raise ValueError("geometric grid needs positive end points and at least one point")
        return v

    def values(self) -> list[float]:
        return [float(x) for x in np.geomspace(*self.geom)]


class LinGrid(_Strict):
    lin: tuple[float, float, int]

    @field_validator("lin")
    @classmethod
    def _count(cls, v):
        if v[2] < 1:
            raise ValueError("linear grid needs at least one point")
        return v

    def values(self) -> list[float]:
        return [float(x) for x in np.linspace(*self.lin)]


Grid = Union[list[float], GeomGrid, LinGrid]


def grid_values(g: Grid) -> list[float]:
    return [float(x) for x in g] if isinstance(g, list) else g.values()


class Tolerances(_Strict):
    oracle: float = Field(default=1e-9, gt=0, lt=1)
    saddle: float = Field(default=1e-10, gt=0, lt=1)


class EnvelopeConfig(_Strict):
    """c1 = upper * c, c2 = lower * c around the regime constant, unless c1, c2 are given."""

    form: Literal["theorem", "corollary"] = "theorem"
    upper: float = Field(default=1.1, gt=1)
    lower: float = Field(default=0.9, gt=0, lt=1)
    c1: Optional[float] = None
    c2: Optional[float] = None


class CheckConfig(_Strict):
    delta: float = Field(default=0.1, gt=0)
    z_max: float = Field(default=1e4, gt=1)


class RunConfig(_Strict):
    measure: MeasureSpec
    kernel: KernelSpec
    t: Grid = [1.0]
    x: Grid = [1.0]
    a: Grid = [1.0]
    methods: list[Literal["asymptotic", "oracle"]] = ["asymptotic"]
    tolerances: Tolerances = Tolerances()
    envelope: EnvelopeConfig = EnvelopeConfig()
    check: CheckConfig = CheckConfig()
    out: str = "."

    @field_validator("methods")
    @classmethod
    def _methods(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError("methods must be a nonempty list without repeats")
        return v

    @model_validator(mode="after")
    def _grids(self):
        if any(not (t > 0 and math.isfinite(t)) for t in grid_values(self.t)):
            raise ValueError("t grid values must be positive and finite")
        if any(not math.isfinite(x) for x in grid_values(self.x) + grid_values(self.a)):
            raise ValueError("x and a grid values must be finite")
        return self


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for e in exc.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "\n".join(lines)


def parse_config(text: str) -> RunConfig:
    """Validate a JSON document; schema errors are reported with their paths."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc


# ------------------------------------------------------- model construction


def build_measure(spec: MeasureSpec) -> LevyMeasure:
    comps = []
    for c in spec.components:
        if isinstance(c, AtomsSpec):
            comps.append(Atomic(tuple(c.positions), tuple(c.masses)))
        elif isinstance(c, SeriesSpec):
            comps.append(Atomic.series(c.rho, c.n_max))
        else:
            lo = -math.inf if c.lo is None else c.lo
            hi = math.inf if c.hi is None else c.hi
            comps.append(power_exp_density(c.coef, c.power, c.b, c.beta, lo, hi))
    tc = spec.tail_class
    if isinstance(tc, TruncatedSpec):
        tail = Truncated(tc.sigma_plus)
    elif isinstance(tc, ExpDampedSpec):
        tail = ExpDamped(tc.b, tc.beta, tc.q_degree)
    else:
        tail = None
    return LevyMeasure(tuple(comps), tail)


def build_kernel(spec):
    if isinstance(spec, IndicatorSpec):
        return Indicator()
    if isinstance(spec, OuSpec):
        return OuNonStationary(spec.gamma)
    if isinstance(spec, OuStationarySpec):
        return OuStationary(spec.gamma)
    return FractionalLevy(spec.hurst)


def build_model(config: RunConfig):
    """(kernel, measure); raises ConfigError when the measure is not a valid Levy measure."""
    try:
        measure = build_measure(config.measure)
        kernel = build_kernel(config.kernel)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = validate(measure)
    bad = [c.name for c in report.checks
           if not c.passed and not (c.name == "tail_class" and measure.tail_class is None)]
    if bad:
        raise ConfigError("measure fails validation: " + ", ".join(bad) + f" ({json.dumps(report.to_dict(), default=str)})")
    return kernel, measure


# ------------------------------------------------------------------ workers

_STATE: dict = {}


def _init_worker(config_json: str) -> None:
    config = RunConfig.model_validate_json(config_json)
    kernel, measure = build_model(config)
    _STATE.update(config=config, kernel=kernel, measure=measure)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _saddle_row(t: float, x: float) -> dict:
    from .saddle import density_asymptotic, solve_saddle

    k, mu, cfg = _STATE["kernel"], _STATE["measure"], _STATE["config"]
    meas, xe = (mu, x) if x >= 0 else (mu.reflected(), -x)
    sp = solve_saddle(k, meas, t, xe, rtol=cfg.tolerances.saddle)
    est = density_asymptotic(sp)
    return {"t": t, "x": x, "method": "asymptotic", "log_p": est.log_p, "p": est.p, "err_estimate": None,
            "xi": math.copysign(sp.xi, x) if x else 0.0, "D": sp.big_d, "log_K": sp.log_big_k}


def _oracle_row(t: float, x: float, tol: float) -> dict:
    from .oracle import density_oracle

    est = density_oracle(_STATE["kernel"], _STATE["measure"], t, x, tol=tol, check_gate=False)
    return {"t": t, "x": x, "method": "oracle", "log_p": est.log_p, "p": est.p, "err_estimate": est.err_estimate}


def _task(job):
    kind = job[0]
    try:
        if kind == "asymptotic":
            return _saddle_row(job[1], job[2])
        if kind == "oracle":
            return _oracle_row(job[1], job[2], job[3])
        if kind == "ratio":
            from .saddle import log_density_ratio

            x, a = job[1], job[2]
            lr = log_density_ratio(_STATE["kernel"], _STATE["measure"], x, a)
            return lr
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise RuntimeError(f"unknown job {kind}")


def _run_jobs(jobs: list, config: RunConfig, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_task(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs, initializer=_init_worker,
                             initargs=(config.model_dump_json(),)) as pool:
        return list(pool.map(_task, jobs, chunksize=1))


# ----------------------------------------------------------------- commands


def _gate(kernel, measure, ts, config: RunConfig) -> dict:
    from .diagnostics import hw_gate

    verdicts = {}
    for t in sorted(set(ts)):
        v = hw_gate(kernel, measure, t, config.check.delta, config.check.z_max)
        verdicts[_fmt(t)] = v.verdict
        if v.verdict != "pass":
            raise GateFailure(f"oracle gate is '{v.verdict}' at t={t:g}; the inversion integral is not known to converge", v)
    return verdicts


def _points(config: RunConfig):
    return [(t, x) for t in grid_values(config.t) for x in grid_values(config.x)]


def cmd_density(config, kernel, measure, tol, n_jobs, meta):
    pts = _points(config)
    jobs = []
    if "oracle" in config.methods:
        meta["gate"] = _gate(kernel, measure, [t for t, _ in pts], config)
    for t, x in pts:
        for m in config.methods:
            jobs.append(("asymptotic", t, x) if m == "asymptotic" else ("oracle", t, x, tol))
    rows = _run_jobs(jobs, config, n_jobs)
    cols = ["t", "x", "method", "log_p", "p", "err_estimate"]
    return cols, rows


def cmd_compare(config, kernel, measure, tol, n_jobs, meta):
    pts = _points(config)
    cols = ["t", "x", "method", "log_p", "p", "err_estimate", "xi", "D", "log_K", "K", "log_ratio", "ratio"]
    try:
        meta["gate"] = _gate(kernel, measure, [t for t, _ in pts], config)
    except GateFailure as exc:
        # the saddle columns are still well defined; write them, then report the failure
        rows = _run_jobs([("asymptotic", t, x) for t, x in pts], config, n_jobs)
        for r in rows:
            r["K"] = math.exp(r["log_K"])
        meta["gate_failure"] = exc
        return cols, rows
    jobs = []
    for t, x in pts:
        jobs += [("asymptotic", t, x), ("oracle", t, x, tol)]
    res = _run_jobs(jobs, config, n_jobs)
    rows = []
    for i in range(0, len(res), 2):
        asym, orc = res[i], res[i + 1]
        log_ratio = asym["log_p"] - orc["log_p"]
        extra = {"xi": asym["xi"], "D": asym["D"], "log_K": asym["log_K"], "K": math.exp(asym["log_K"]),
                 "log_ratio": log_ratio, "ratio": math.exp(log_ratio)}
        rows.append({**asym, **extra})
        rows.append({**orc, **extra})
    return cols, rows


def cmd_ratio(config, kernel, measure, tol, n_jobs, meta):
    if not isinstance(kernel, OuStationary):
        raise ConfigError("kernel: the ratio command needs the ou_stationary kernel")
    xs, as_ = grid_values(config.x), grid_values(config.a)
    dens = _run_jobs([("asymptotic", 1.0, x) for x in xs], config, n_jobs)
    lrs = _run_jobs([("ratio", x, a) for x in xs for a in as_], config, n_jobs)
    rows = []
    for i, x in enumerate(xs):
        for j, a in enumerate(as_):
            lr = lrs[i * len(as_) + j]
            rel = abs(lr.log_exact - lr.log_asymptotic) / abs(lr.log_asymptotic) if lr.log_asymptotic else None
            rows.append({**dens[i], "a": a, "log_ratio": lr.log_exact, "log_ratio_asym": lr.log_asymptotic,
                         "ratio": math.exp(lr.log_exact), "ratio_asym": math.exp(lr.log_asymptotic), "rel_err": rel})
    cols = ["t", "x", "method", "log_p", "p", "err_estimate", "xi", "a", "log_ratio", "log_ratio_asym",
            "ratio", "ratio_asym", "rel_err"]
    return cols, rows


def cmd_bounds(config, kernel, measure, tol, n_jobs, meta):
    from .bounds import EnvelopeSpec, envelope_spec, locate_threshold

    env = config.envelope
    try:
        spec = envelope_spec(kernel, measure, env.upper, env.lower, env.form)
        if env.c1 is not None or env.c2 is not None:
            spec = EnvelopeSpec(spec.c_star, env.c1 if env.c1 is not None else spec.c1,
                                env.c2 if env.c2 is not None else spec.c2, spec.beta, spec.form)
    except ValueError as exc:
        raise ConfigError(f"envelope: {exc}") from exc
    meta["envelope"] = {"form": spec.form, "c_star": spec.c_star, "c1": spec.c1, "c2": spec.c2,
                        "regime": spec.regime, "beta": spec.beta}
    pts = _points(config)
    res = _run_jobs([("asymptotic", t, x) for t, x in pts], config, n_jobs)
    rows = []
    thresholds = {}
    for t in grid_values(config.t):
        sel = [(r, envelope_safe(kernel, measure, spec, t, r["x"])) for r in res if r["t"] == t]
        sel = [(r, e) for r, e in sel if e is not None]
        thr = None
        if sel:
            thr = locate_threshold([e[2] for _, e in sel], [r["log_p"] for r, _ in sel],
                                   [e[0] for _, e in sel], [e[1] for _, e in sel])
        thresholds[_fmt(t)] = thr
        for r, (lo, hi, y) in sel:
            rows.append({**r, "y": y, "log_lower": lo, "log_upper": hi,
                         "inside": lo <= r["log_p"] <= hi, "y_threshold": thr})
    meta["thresholds"] = thresholds
    cols = ["t", "x", "method", "log_p", "p", "err_estimate", "y", "log_lower", "log_upper", "inside", "y_threshold"]
    return cols, rows


def envelope_safe(kernel, measure, spec, t, x):
    """(log_lower, log_upper, y) or None where the envelope is not defined (x / tau <= 1)."""
    from .bounds import _scales, envelope

    try:
        lo, hi = envelope(kernel, measure, spec, t, x)
    except ValueError:
        return None
    return lo, hi, x / _scales(kernel, t, spec.form)[1]


def cmd_check(config, kernel, measure, tol, n_jobs, meta):
    from .diagnostics import run_condition_report

    rows = []
    reports = {}
    for t in grid_values(config.t):
        rep = run_condition_report(kernel, measure, t, config.check.delta, config.check.z_max)
        reports[_fmt(t)] = rep.to_dict()
        for name, v in rep.verdicts.items():
            rows.append({"t": t, "condition": name, "verdict": v.verdict})
    meta["report"] = reports
    return ["t", "condition", "verdict"], rows


_DISPATCH = {"density": cmd_density, "compare": cmd_compare, "ratio": cmd_ratio, "bounds": cmd_bounds, "check": cmd_check}


# -------------------------------------------------------------------- output


def render_csv(columns: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def config_hash(config: RunConfig) -> str:
    canon = json.dumps(config.model_dump(mode="json", exclude={"out"}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _versions() -> dict:
    import pydantic

    return {"levysaddle": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "pydantic": pydantic.__version__, "backend": _backend.BACKEND}


def run_command(config: RunConfig, command: str, out: Optional[str] = None, tol: Optional[float] = None,
                jobs: int = 1) -> tuple[Path, Path]:
    """Run one command and write <command>.csv and <command>.json; returns their paths."""
    if command not in _DISPATCH:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    oracle_tol = config.tolerances.oracle if tol is None else float(tol)
    if not 0 < oracle_tol < 1:
        raise ConfigError("--tol must lie in (0, 1)")
    kernel, measure = build_model(config)
    _STATE.update(config=config, kernel=kernel, measure=measure)
    meta = {"command": command, "config_sha256": config_hash(config),
            "tolerances": {"oracle": oracle_tol, "saddle": config.tolerances.saddle},
            "versions": _versions(), "jobs": int(jobs)}
    columns, rows = _DISPATCH[command](config, kernel, measure, oracle_tol, int(jobs), meta)
    out_dir = Path(out if out is not None else config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{command}.csv"
    json_path = out_dir / f"{command}.json"
    csv_path.write_text(render_csv(columns, rows))
    meta["csv"] = csv_path.name
    meta["rows"] = len(rows)
    failure = meta.pop("gate_failure", None)
    if failure is not None:
        meta["gate"] = {"verdict": failure.verdict.verdict if failure.verdict else "fail", "message": str(failure)}
    json_path.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    if failure is not None:
        raise failure
    return csv_path, json_path


def _jsonable(obj):
    from .diagnostics import _jsonable as conv

    return conv(obj)


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(prog="levysaddle", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides the config)")
    parser.add_argument("--tol", type=float, default=None, help="oracle relative tolerance")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    args = parser.parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        config = parse_config(text)
        csv_path, _ = run_command(config, args.command, args.out, args.tol, args.jobs)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GateFailure as exc:
        print(f"gate failure: {exc}", file=sys.stderr)
        return EXIT_GATE
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    print(csv_path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
