import math

import numpy as np
import pytest
from scipy import stats

from levysaddle import (
    Atomic,
    FractionalLevy,
    GateFailure,
    Indicator,
    LevyMeasure,
    OuStationary,
    contour_integrand,
    density,
    density_oracle,
    power_exp_density,
    solve_saddle,
    tail_bound,
)
from levysaddle.oracle import PHASE_SPLIT

from conftest import E, gauss_damped, rel, unit_atom


def gamma_process() -> LevyMeasure:
    """u^{-1} e^{-u} du: the centred law at time t is Gamma(t, 1) - t."""
    return LevyMeasure((power_exp_density(1.0, -1.0, 1.0, 1.0),), None)


def inverse_gaussian() -> LevyMeasure:
    """u^{-3/2} e^{-u} du, the inverse Gaussian subordinator with delta = sqrt(2 pi), gamma = sqrt 2."""
    return LevyMeasure((power_exp_density(1.0, -1.5, 1.0, 1.0),), None)


def inverse_gaussian_density(x: float, t: float) -> float:
    """Centred time-t law, from the closed form of scipy's inverse Gaussian."""
    delta, gam = math.sqrt(2 * math.pi), math.sqrt(2.0)
    mean, shape = t * delta / gam, (t * delta) ** 2
    return stats.invgauss.pdf(x + mean, mean / shape, scale=shape)


def symmetric_measure() -> LevyMeasure:
    return LevyMeasure((power_exp_density(1.0, -1.5, 1.0, 2.0, 0.0, math.inf),
                        power_exp_density(1.0, -1.5, 1.0, 2.0, -math.inf, 0.0)), None)


def test_integrand_at_origin_is_saddle_exponent():
    sp = solve_saddle(Indicator(), gauss_damped(), 1.0, 2.0)
    r, i = contour_integrand(Indicator(), gauss_damped(), 1.0, 2.0, 0.0)
    assert r == pytest.approx(sp.big_d, rel=1e-12)
    assert i == 0.0


def test_integrand_unit_atom_closed_form():
    r, _ = contour_integrand(Indicator(), unit_atom(), 1.0, E - 1.0, math.pi)
    assert r == pytest.approx(-1.0 - 2.0 * E, rel=1e-12)


def test_symmetric_measure_has_no_phase_at_origin():
    etas = np.linspace(0.0, 30.0, 31)
    _, i = contour_integrand(Indicator(), symmetric_measure(), 1.0, 0.0, etas)
    assert np.max(np.abs(i)) < 1e-12


@pytest.mark.parametrize("kernel,measure,eta_max", [
    (Indicator(), gauss_damped(), 50.0),
    (FractionalLevy(0.75), unit_atom(), 50.0),
    (OuStationary(-1.0), unit_atom(), 50.0),
    (OuStationary(-1.0), gauss_damped(), 4.0),
])
def test_real_part_bounded_by_saddle_exponent(kernel, measure, eta_max):
    x = 3.0
    sp = solve_saddle(kernel, measure, 1.0, x)
    etas = np.linspace(0.0, eta_max, 101)
    r, i = contour_integrand(kernel, measure, 1.0, x, etas)
    assert np.all(r <= sp.big_d + 1e-12 * abs(sp.big_d))
    # stationarity: I'(0) = x - M1 = 0
    h = 1e-5
    _, ih = contour_integrand(kernel, measure, 1.0, x, h)
    assert abs(ih / h) < 1e-6 * x
    delta = tail_bound(kernel, measure, 1.0, x, etas)
    assert np.all(r <= sp.big_d - delta + 1e-10 * (1.0 + abs(sp.big_d)))


def test_product_node_budget_raises(monkeypatch):
    from levysaddle import QuadratureError, kernel as kernel_mod

    kernel_mod._effective.cache_clear()
    monkeypatch.setattr(kernel_mod, "MAX_PRODUCT_NODES", 1000)
    with pytest.raises(QuadratureError, match="budget"):
        contour_integrand(OuStationary(-1.0), gauss_damped(), 1.0, 1.0, 1.0, shift=0.0)
    kernel_mod._effective.cache_clear()


def test_gate_failure_for_atom_with_levy_process():
    with pytest.raises(GateFailure) as info:
        density_oracle(Indicator(), unit_atom(), 1.0, 1.0)
    assert info.value.verdict.verdict == "fail"


@pytest.mark.parametrize("x,shift", [(-1.0, None), (0.0, None), (0.4, None), (1.0, 0.0), (2.0, 0.5), (4.0, 0.5)])
def test_inverse_gaussian_closed_form(x, shift):
    got = density_oracle(Indicator(), inverse_gaussian(), 1.0, x, tol=1e-10, shift=shift)
    assert rel(got.p, inverse_gaussian_density(x, 1.0)) < 1e-8
    assert got.method == "oracle"
    assert got.err_estimate < 1e-6


def test_gamma_process_gate_tracks_integrability():
    # Theta grows like t ln z: t = 1 gives the exponential law, whose characteristic
    # function ~ 1/|z| is not integrable; t = 2 clears the 1 + delta threshold
    from levysaddle import hw_gate

    assert hw_gate(Indicator(), gamma_process(), 1.0).verdict == "fail"
    assert hw_gate(Indicator(), gamma_process(), 2.0).verdict == "pass"


@pytest.mark.parametrize("kernel,mu", [(Indicator(), gauss_damped()), (FractionalLevy(0.75), unit_atom())])
def test_shift_invariance(kernel, mu):
    for x in (0.3, 1.5):
        shifted = density_oracle(kernel, mu, 1.0, x)
        plain = density_oracle(kernel, mu, 1.0, x, shift=0.0)
        assert rel(plain.p, shifted.p) < 1e-6


def test_phase_split_does_not_change_result():
    mu = gauss_damped()
    a = density_oracle(Indicator(), mu, 1.0, 2.0, phase_split=PHASE_SPLIT)
    b = density_oracle(Indicator(), mu, 1.0, 2.0, phase_split=math.pi / 4)
    assert rel(a.p, b.p) < 1e-8


def test_negative_x_uses_reflection():
    mu = gauss_damped()
    direct = density_oracle(Indicator(), mu, 1.0, -0.7)
    mirrored = density_oracle(Indicator(), mu.reflected(), 1.0, 0.7, check_gate=False)
    assert rel(direct.p, mirrored.p) < 1e-9


def test_positive_in_bulk():
    # image of one atom under the stationary kernel: density 1 / (|gamma| v) on (0, 1]
    mu = unit_atom()
    for x in (-1.0, 0.0, 0.5, 1.5):
        assert density_oracle(OuStationary(-0.2), mu, 1.0, x).p > 0


def test_asymptotic_approaches_oracle():
    mu = gauss_damped()
    errs = []
    for x in (5.0, 20.0, 80.0):
        errs.append(abs(density(Indicator(), mu, 1.0, x).p / density_oracle(Indicator(), mu, 1.0, x).p - 1.0))
    assert errs[-1] < 0.15
    assert errs[-1] < errs[0]


def test_atomic_fractional_motion_is_invertible():
    # the kernel smooths the atom: the gate passes and the oracle is near the saddle value
    mu = unit_atom()
    o = density_oracle(FractionalLevy(0.75), mu, 1.0, 2.0)
    assert rel(o.p, density(FractionalLevy(0.75), mu, 1.0, 2.0).p) < 0.05


def test_series_atoms_not_flagged_as_smooth():
    series = LevyMeasure((Atomic.series(0.0, 2000),), None)
    with pytest.raises(GateFailure):
        density_oracle(Indicator(), series, 1.0, 1.0)
