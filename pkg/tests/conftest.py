import math

import pytest

from levysaddle import Atomic, ExpDamped, LevyMeasure, Truncated, power_exp_density


def unit_atom(mass: float = 1.0) -> LevyMeasure:
    return LevyMeasure((Atomic((1.0,), (mass,)),), Truncated(1.0))


def gauss_damped() -> LevyMeasure:
    """u^{-3/2} e^{-u^2} du on (0, inf)."""
    return LevyMeasure((power_exp_density(1.0, -1.5, 1.0, 2.0),), ExpDamped(1.0, 2.0))


def stable_truncated() -> LevyMeasure:
    """u^{-3/2} du on (0, 1]."""
    return LevyMeasure((power_exp_density(1.0, -1.5, 0.0, 1.0, 0.0, 1.0),), Truncated(1.0))


@pytest.fixture
def atom():
    return unit_atom()


@pytest.fixture
def damped():
    return gauss_damped()


@pytest.fixture
def truncated_density():
    return stable_truncated()


def rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b else abs(a)


E = math.e
