import math
import os
import subprocess
import sys

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levysaddle import _backend, _core_py

compiled = _backend._impl if _backend.COMPILED else None
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled core not built")


def node_set(n, seed=0, lo=-1.0, hi=3.0):
    rng = np.random.default_rng(seed)
    return np.sort(rng.uniform(lo, hi, n)), rng.normal(-3.0, 1.0, n)


@needs_compiled
@pytest.mark.parametrize("xi", [0.0, 0.7, 25.0])
def test_contour_sums_parity(xi):
    v, lw = node_set(5000)
    etas = np.array([0.0, 1e-6, 0.3, 7.0, 400.0])
    a0, b0 = _core_py.contour_sums(v, lw, xi, etas)
    a1, b1 = compiled.contour_sums(v, lw, xi, etas)
    scale = np.sum(np.exp(lw + xi * v) * (1.0 + np.abs(v) * etas.max()))
    assert np.max(np.abs(a0 - a1)) <= 1e-13 * scale
    assert np.max(np.abs(b0 - b1)) <= 1e-13 * scale


@needs_compiled
def test_cos_sums_parity():
    v, lw = node_set(5000)
    zs = np.geomspace(1e-4, 1e4, 17)
    g0, g1 = _core_py.cos_sums(v, lw, zs), compiled.cos_sums(v, lw, zs)
    assert np.allclose(g0, g1, rtol=1e-12, atol=0)


@needs_compiled
@pytest.mark.parametrize("k", [0, 1, 2, 4])
def test_log_moment_parity(k):
    v, lw = node_set(3000, lo=0.01)
    for xi in (0.0, 1.3, 200.0):
        assert compiled.log_moment(v, lw, xi, k) == pytest.approx(_core_py.log_moment(v, lw, xi, k), rel=1e-13, abs=1e-13)


def test_small_arguments_do_not_cancel():
    # 1 - cos(eta v) and e^{xi v} - 1 - xi v at tiny arguments, against mpmath
    v = np.array([1e-9, 2e-7])
    lw = np.zeros(2)
    eta = 3e-2
    a, _ = _backend.contour_sums(v, lw, 0.0, np.array([eta]))
    ref = sum(1 - mp.cos(mp.mpf(eta) * mp.mpf(float(x))) for x in v)
    assert float(a[0]) == pytest.approx(float(ref), rel=1e-12)
    lp = _core_py.log_phi0(np.array([1e-8, 0.05, 0.5, 3.0, 800.0]))
    with mp.workdps(40):
        refs = [mp.log(mp.expm1(mp.mpf(z)) - mp.mpf(z)) for z in (1e-8, 0.05, 0.5, 3.0, 800.0)]
    assert lp == pytest.approx([float(r) for r in refs], rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=40), st.floats(0.0, 10.0))
def test_log_moment_matches_direct_sum(vs, xi):
    v = np.array(vs)
    lw = np.linspace(-2.0, 1.0, len(vs))
    got = _core_py.log_moment(v, lw, xi, 2)
    direct = float(np.sum(np.exp(lw) * v ** 2 * np.exp(xi * v)))
    if direct > 0:
        assert got == pytest.approx(math.log(direct), rel=1e-12, abs=1e-12)


def test_pure_flag_selects_numpy_backend():
    env = dict(os.environ, LEVYSADDLE_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import levysaddle; print(levysaddle.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"


def test_pure_backend_gives_same_density():
    code = ("import levysaddle as ls, sys; sys.path.insert(0, 'tests'); from conftest import gauss_damped;"
            "print(repr(ls.density_oracle(ls.Indicator(), gauss_damped(), 1.0, 1.5).log_p))")
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    vals = []
    for flag in ("1", "0"):
        env = dict(os.environ, LEVYSADDLE_PURE=flag)
        out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, cwd=here, check=True)
        vals.append(float(out.stdout.strip()))
    assert vals[0] == pytest.approx(vals[1], rel=1e-10)
