"""Structural invariants checked on randomly drawn inputs."""
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from levysaddle import (
    Atomic,
    EnvelopeSpec,
    FractionalLevy,
    Indicator,
    LevyMeasure,
    Truncated,
    c2_beta,
    density,
    envelope,
    kernel_eval,
    locate_threshold,
    m_moment,
    ratio_bounds,
    script_moment,
    solve_saddle,
    theta,
)

from conftest import gauss_damped

FAST = settings(max_examples=25, deadline=None)

atoms = st.lists(st.tuples(st.floats(0.05, 3.0), st.floats(0.1, 5.0)), min_size=1, max_size=5,
                 unique_by=lambda p: p[0])


def atomic(pairs) -> LevyMeasure:
    pos, mass = zip(*sorted(pairs))
    return LevyMeasure((Atomic(tuple(pos), tuple(mass)),), Truncated(max(pos)))


@FAST
@given(atoms, st.floats(0.0, 6.0), st.floats(0.01, 2.0))
def test_moments_increase_in_tilt(pairs, xi, step):
    mu = atomic(pairs)
    for k in (0, 1, 2):
        lo, hi = m_moment(mu, k, xi), m_moment(mu, k, xi + step)
        lo = lo if k < 2 else lo.value
        hi = hi if k < 2 else hi.value
        assert hi >= lo * (1 - 1e-12)


@FAST
@given(atoms, st.floats(0.0, 5.0), st.floats(0.05, 1.0))
def test_second_moment_log_convex(pairs, xi, h):
    mu = atomic(pairs)
    f = [m_moment(mu, 2, xi + j * h).log for j in range(3)]
    assert f[0] + f[2] - 2 * f[1] >= -1e-10


@FAST
@given(atoms, st.floats(0.0, 4.0))
def test_first_moment_is_derivative_of_zeroth(pairs, xi):
    mu = atomic(pairs)
    assume(xi > 0)
    # step proportional to xi keeps the h^2 truncation error relative to M1 ~ xi
    h = 1e-4 * min(1.0, xi)
    fd = (m_moment(mu, 0, xi + h) - m_moment(mu, 0, xi - h)) / (2 * h)
    assert fd == pytest.approx(m_moment(mu, 1, xi), rel=1e-7)


@FAST
@given(atoms, st.floats(0.5, 3.0), st.floats(0.2, 40.0))
def test_saddle_residual_and_concavity(pairs, t, x):
    mu = atomic(pairs)
    k = Indicator()
    sp = solve_saddle(k, mu, t, x)
    assert script_moment(k, mu, 1, t, sp.xi) == pytest.approx(x, rel=1e-9)
    # D is concave in x with D'(x) = -xi
    h = 1e-3 * x
    d = [solve_saddle(k, mu, t, x + j * h).big_d for j in (-1, 0, 1)]
    assert d[0] + d[2] - 2 * d[1] <= 1e-9 * max(1.0, abs(d[1]))
    assert (d[2] - d[0]) / (2 * h) == pytest.approx(-sp.xi, rel=1e-4, abs=1e-6)


@FAST
@given(atoms, st.floats(0.1, 200.0))
def test_theta_even_nonnegative_bounded(pairs, z):
    mu = atomic(pairs)
    th = theta(Indicator(), mu, 1.0, z)
    assert th == pytest.approx(theta(Indicator(), mu, 1.0, -z), rel=1e-12, abs=1e-15)
    total = sum(m for _, m in pairs)
    assert -1e-12 <= th <= 2.0 * total * (1 + 1e-12)


@FAST
@given(st.floats(1.01, 6.0))
def test_c2_beta_positive_and_below_one(beta):
    c = c2_beta(beta)
    assert 0.0 < c < 1.0


@FAST
@given(st.floats(0.1, 5.0), st.floats(1.05, 1.5), st.floats(0.5, 0.95), st.floats(1.01, 1e8),
       st.one_of(st.none(), st.floats(1.1, 4.0)))
def test_envelope_ordering(cs, up, down, y, beta):
    spec = EnvelopeSpec(cs, up * cs, down * cs, beta)
    lo, hi = envelope(Indicator(), LevyMeasure((Atomic((1.0,), (1.0,)),), Truncated(1.0)), spec, 1.0, y)
    assert lo <= hi <= 0.0


@FAST
@given(st.floats(0.01, 5.0), st.floats(1.5, 1e9))
def test_ratio_bounds_ordered_below_one(a, x):
    lo, hi = ratio_bounds(gauss_damped(), a, x)
    assert 0.0 <= lo <= hi <= 1.0


@FAST
@given(st.lists(st.booleans(), min_size=1, max_size=30))
def test_threshold_is_start_of_final_run(flags):
    ys = np.arange(1.0, len(flags) + 1.0)
    lp = np.where(flags, 0.0, 5.0)
    thr = locate_threshold(ys, lp, -np.ones_like(ys), np.ones_like(ys))
    if not flags[-1]:
        assert thr is None
    else:
        k = len(flags) - 1
        while k > 0 and flags[k - 1]:
            k -= 1
        assert thr == ys[k]


@FAST
@given(st.floats(0.55, 0.95), st.floats(0.2, 5.0), st.floats(-20.0, 5.0))
def test_fractional_kernel_nonnegative_and_bounded(h, t, s):
    k = FractionalLevy(h)
    v = kernel_eval(k, t, s)
    assert 0.0 <= v <= t ** (h - 0.5) / math.gamma(h + 0.5) * (1 + 1e-12)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.5, 30.0))
def test_density_positive_and_below_peak(x):
    mu = gauss_damped()
    p = density(Indicator(), mu, 1.0, x).p
    assert 0.0 < p <= density(Indicator(), mu, 1.0, 0.0).p * 1.5
