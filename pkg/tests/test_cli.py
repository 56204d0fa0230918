import csv
import io
import json
import math

import pytest

from levysaddle import ConfigError
from levysaddle.cli import EXIT_CONFIG, EXIT_GATE, EXIT_NONCONVERGENCE, EXIT_OK, main, parse_config, run_command

ATOM = {"components": [{"type": "atoms", "positions": [1.0], "masses": [1.0]}],
        "tail_class": {"type": "truncated", "sigma_plus": 1.0}}
DAMPED = {"components": [{"type": "power_exp", "coef": 1.0, "power": -1.5, "b": 1.0, "beta": 2.0}],
          "tail_class": {"type": "exp_damped", "b": 1.0, "beta": 2.0}}


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_minimal_config_parses():
    cfg = parse_config(json.dumps({"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0], "x": [1.0]}))
    assert cfg.kernel.type == "indicator"
    assert cfg.methods == ["asymptotic"]


def test_hurst_out_of_range_names_the_field():
    doc = {"measure": ATOM, "kernel": {"type": "fractional_levy", "hurst": 0.4}, "t": [1.0], "x": [1.0]}
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(doc))
    msg = str(info.value)
    assert "hurst" in msg and "(1/2, 1)" in msg


def test_unknown_key_is_rejected_with_path():
    doc = {"measure": ATOM, "kernel": {"type": "indicator", "speed": 2}, "t": [1.0], "x": [1.0]}
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(doc))
    assert "kernel" in str(info.value) and "speed" in str(info.value)


@pytest.mark.parametrize("kernel,needle", [
    ({"type": "ou_stationary", "gamma": 0.5}, "gamma"),
    ({"type": "ou", "gamma": math.inf}, "gamma"),
])
def test_inconsistent_kernel_parameters(kernel, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps({"measure": ATOM, "kernel": kernel, "t": [1.0], "x": [1.0]}))
    assert needle in str(info.value)


def test_damping_exponent_must_exceed_one():
    bad = {"components": DAMPED["components"], "tail_class": {"type": "exp_damped", "b": 1.0, "beta": 1.0}}
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps({"measure": bad, "kernel": {"type": "indicator"}, "t": [1.0], "x": [1.0]}))
    assert "beta" in str(info.value)


def test_grid_forms():
    cfg = parse_config(json.dumps({"measure": ATOM, "kernel": {"type": "indicator"}, "t": {"lin": [1, 2, 3]},
                                   "x": {"geom": [1, 100, 3]}}))
    from levysaddle.cli import grid_values

    assert grid_values(cfg.t) == [1.0, 1.5, 2.0]
    assert grid_values(cfg.x) == pytest.approx([1.0, 10.0, 100.0], rel=1e-15)


def test_compare_on_atom_writes_closed_form_saddle_columns(tmp_path):
    xs = [0.5, 3.0, 40.0]
    doc = {"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0, 2.0], "x": xs}
    code = main(["compare", "--config", write_config(tmp_path, doc), "--out", str(tmp_path / "o")])
    # the atom fails the oracle gate: saddle rows are written and the exit code says so
    assert code == EXIT_GATE
    rows = read_rows(tmp_path / "o" / "compare.csv")
    assert len(rows) == 6
    for r in rows:
        t, x = float(r["t"]), float(r["x"])
        xi = math.log1p(x / t)
        assert float(r["xi"]) == pytest.approx(xi, rel=1e-12)
        assert float(r["D"]) == pytest.approx(x - (x + t) * xi, rel=1e-12)
        assert float(r["K"]) == pytest.approx(t + x, rel=1e-12)
    meta = json.loads((tmp_path / "o" / "compare.json").read_text())
    assert meta["gate"]["verdict"] == "fail"


def test_check_on_atom_reports_gate_failure(tmp_path):
    doc = {"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0], "x": [1.0]}
    assert main(["check", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "check.json").read_text())
    assert meta["report"]["1"]["verdicts"]["gate"]["verdict"] == "fail"
    rows = {r["condition"]: r["verdict"] for r in read_rows(tmp_path / "check.csv")}
    assert rows["gate"] == "fail" and rows["N4"] == "pass"


def test_density_at_origin_is_gaussian_peak(tmp_path):
    doc = {"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0, 3.0], "x": [0.0, 1.0]}
    assert main(["density", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_OK
    rows = read_rows(tmp_path / "density.csv")
    for r in rows:
        assert set(("t", "x", "method", "log_p", "p", "err_estimate")) <= set(r)
        if float(r["x"]) == 0.0:
            # second moment of a unit atom over [0, t] is t
            assert float(r["log_p"]) == pytest.approx(-0.5 * math.log(2 * math.pi * float(r["t"])), rel=1e-14)
            assert r["err_estimate"] == ""


def test_seventeen_significant_digits(tmp_path):
    doc = {"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0], "x": [0.1]}
    main(["density", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)])
    r = read_rows(tmp_path / "density.csv")[0]
    mantissa = r["log_p"].lstrip("-").split("e")[0].replace(".", "").lstrip("0")
    assert len(mantissa) == 17 or float(format(float(r["log_p"]), ".17g")) == float(r["log_p"])


def test_output_is_byte_identical_across_runs_and_workers(tmp_path):
    doc = {"measure": DAMPED, "kernel": {"type": "indicator"}, "t": [1.0], "x": [-1.0, 0.0, 0.7, 4.0],
           "methods": ["asymptotic", "oracle"]}
    cfg = write_config(tmp_path, doc)
    outs = []
    for k, jobs in enumerate(("1", "1", "2")):
        d = tmp_path / f"o{k}"
        assert main(["density", "--config", cfg, "--out", str(d), "--jobs", jobs]) == EXIT_OK
        outs.append((d / "density.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    rows = read_rows(tmp_path / "o0" / "density.csv")
    assert [r["method"] for r in rows[:2]] == ["asymptotic", "oracle"]
    assert all(float(r["err_estimate"]) < 1e-6 for r in rows if r["method"] == "oracle")


def test_sidecar_metadata(tmp_path):
    doc = {"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0], "x": [1.0]}
    cfg = write_config(tmp_path, doc)
    main(["density", "--config", cfg, "--out", str(tmp_path), "--tol", "1e-8"])
    meta = json.loads((tmp_path / "density.json").read_text())
    assert len(meta["config_sha256"]) == 64
    assert meta["tolerances"]["oracle"] == 1e-8
    assert {"levysaddle", "numpy", "python", "backend"} <= set(meta["versions"])
    # the hash ignores the output path
    doc2 = dict(doc, out="elsewhere")
    main(["density", "--config", write_config(tmp_path, doc2, "b.json"), "--out", str(tmp_path / "b")])
    assert json.loads((tmp_path / "b" / "density.json").read_text())["config_sha256"] == meta["config_sha256"]


def test_bounds_command_locates_threshold(tmp_path):
    trunc = {"components": [{"type": "atoms", "positions": [1.0], "masses": [1.0]}],
             "tail_class": {"type": "truncated", "sigma_plus": 1.0}}
    doc = {"measure": trunc, "kernel": {"type": "fractional_levy", "hurst": 0.75}, "t": [1.0],
           "x": {"geom": [2.0, 1e6, 12]}}
    assert main(["bounds", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_OK
    meta = json.loads((tmp_path / "bounds.json").read_text())
    thr = meta["thresholds"]["1"]
    assert thr is not None
    for r in read_rows(tmp_path / "bounds.csv"):
        if float(r["y"]) >= thr:
            assert r["inside"] == "true"


def test_ratio_command(tmp_path):
    doc = {"measure": DAMPED, "kernel": {"type": "ou_stationary", "gamma": -1.0}, "t": [1.0],
           "x": [5.0], "a": [0.5]}
    assert main(["ratio", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_OK
    (r,) = read_rows(tmp_path / "ratio.csv")
    assert float(r["ratio"]) == pytest.approx(math.exp(float(r["log_ratio"])), rel=1e-14)
    assert float(r["log_ratio"]) < 0


def test_ratio_needs_stationary_kernel(tmp_path):
    doc = {"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0], "x": [2.0], "a": [1.0]}
    assert main(["ratio", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_exit_codes(tmp_path):
    assert main(["density", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["density", "--config", str(tmp_path / "bad.json")]) == EXIT_CONFIG
    doc = {"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0], "x": [1.0], "methods": ["oracle"]}
    assert main(["density", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_GATE
    doc = {"measure": DAMPED, "kernel": {"type": "indicator"}, "t": [1.0], "x": [1.0], "methods": ["oracle"]}
    cfg = write_config(tmp_path, doc, "tight.json")
    assert main(["density", "--config", cfg, "--out", str(tmp_path), "--tol", "2"]) == EXIT_CONFIG


def test_non_convergence_exit_code(tmp_path, monkeypatch):
    from levysaddle import kernel as kernel_mod

    kernel_mod._effective.cache_clear()
    monkeypatch.setattr(kernel_mod, "MAX_PRODUCT_NODES", 10)
    doc = {"measure": DAMPED, "kernel": {"type": "ou_stationary", "gamma": -1.0}, "t": [1.0], "x": [1.0]}
    assert main(["density", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_NONCONVERGENCE
    kernel_mod._effective.cache_clear()


def test_run_command_returns_paths(tmp_path):
    cfg = parse_config(json.dumps({"measure": ATOM, "kernel": {"type": "indicator"}, "t": [1.0], "x": [1.0]}))
    csv_path, json_path = run_command(cfg, "density", str(tmp_path))
    assert csv_path.name == "density.csv" and json_path.exists()


def test_shipped_configs_parse():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert paths
    for p in paths:
        parse_config(p.read_text())
