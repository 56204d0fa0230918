"""Saddle-point densities of Levy-driven stochastic integrals."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .bounds import (
    EnvelopeSpec,
    c2_beta,
    c_star,
    envelope,
    envelope_spec,
    invariant_density_bounds,
    laplace_integral_asym,
    locate_threshold,
    ratio_bounds,
)
from .diagnostics import ConditionReport, Verdict, hw_gate, run_condition_report, theta
from .errors import (
    ConfigError,
    GateFailure,
    LevySaddleError,
    NonConvergence,
    OverflowRange,
    QuadratureError,
    SaddleError,
)
from .kernel import (
    FractionalLevy,
    Indicator,
    OuNonStationary,
    OuStationary,
    effective_nodes,
    ess_sup,
    kernel_eval,
    script_moment,
    self_similar_form,
)
from .measure import (
    AbsContinuous,
    Atomic,
    ExpDamped,
    LevyMeasure,
    Truncated,
    m_moment,
    power_exp_density,
    tail_mass,
    validate,
)
from .oracle import contour_integrand, density_oracle, tail_bound
from .saddle import (
    DensityEstimate,
    SaddlePoint,
    density,
    density_asymptotic,
    density_ratio,
    from_profile,
    profile_density,
    self_similar_profile,
    solve_saddle,
)
