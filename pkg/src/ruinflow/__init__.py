"""ruinflow: ruin probabilities for risk processes with level-dependent premium rate.

A simulation and numerical-analysis toolkit for reserve processes whose
premium rate approaches the critical rate v_c = E(xi)/E(tau) as the reserve
grows.  Provides reproducible parallel Monte Carlo estimation of ruin
probabilities, exact closed-form oracles for exponential models, Lyapunov
test-function bound envelopes, a transience/recurrence classifier, and
heavy-tailed (regularly varying) claim diagnostics.
"""

__version__ = "0.1.0"

from .chain import Caps, ChainPath, RngStream, Ruined, Survived, sample_jump, simulate_path
from .closedform import ExpExpParams, asymptotic_shape, psi_ratio, unnormalized_psi
from .flow import FlowSolver, flow, flow_increment_bounds
from .heavytail import heavy_envelope, karamata_integral, left_tail_check
from .lyapunov import (
    Classification,
    LyapunovProfile,
    bound_envelope,
    build_profile_inverse,
    classify,
    drift_check,
)
from .models import (
    ClaimModel,
    ConstantRate,
    CriticalInverseRate,
    CriticalPowerRate,
    Deterministic,
    Exponential,
    GammaDist,
    ParetoType,
    RiskModel,
    TabulatedRate,
    critical_rate,
    derived_constants,
    evaluate_rate,
)
from .montecarlo import (
    RuinEstimate,
    decay_exponent_fit,
    estimate_ruin,
    gamma_limit_test,
    ruin_curve,
)

__all__ = [name for name in dir() if not name.startswith("_")]
