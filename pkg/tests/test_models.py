"""Distributions, premium rates, model validation, and derived constants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruinflow.models import (
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


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

def test_exponential_moments_and_tail():
    d = Exponential(2.0)
    assert d.moment(1) == 0.5
    assert d.moment(2) == 0.5
    assert d.tail(1.0) == pytest.approx(math.exp(-2.0))
    assert d.tail(0.0) == 1.0


def test_gamma_moments():
    d = GammaDist(shape=3.0, rate=2.0)
    assert d.moment(1) == pytest.approx(1.5)
    assert d.moment(2) == pytest.approx(3.0)  # shape(shape+1)/rate^2


def test_pareto_moments_and_infinite_cutoff():
    d = ParetoType(beta=1.0, scale=2.0)  # tail exponent 3
    assert d.exponent == 3.0
    assert d.moment(1) == pytest.approx(1.0)
    assert d.moment(2) == pytest.approx(4.0)
    assert d.moment(3) == math.inf
    assert d.tail(2.0) == pytest.approx(2.0 ** -3.0)


@given(beta=st.floats(0.5, 5.0), scale=st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_pareto_mean_matches_tail_integral(beta, scale):
    from scipy import integrate

    d = ParetoType(beta=beta, scale=scale)
    numeric, _ = integrate.quad(d.tail, 0, np.inf)
    assert d.moment(1) == pytest.approx(numeric, rel=1e-6)


def test_deterministic_distribution():
    d = Deterministic(3.0)
    assert d.moment(2) == 9.0
    assert d.tail(2.9) == 1.0 and d.tail(3.0) == 0.0
    assert d.bounded


def test_invalid_distribution_parameters_rejected():
    with pytest.raises(ValueError):
        Exponential(0.0)
    with pytest.raises(ValueError):
        GammaDist(shape=-1.0, rate=1.0)
    with pytest.raises(ValueError):
        ParetoType(beta=0.0)
    with pytest.raises(ValueError):
        Deterministic(-1.0)


def test_claim_model_rejects_degenerate_tau():
    with pytest.raises(ValueError, match="E tau"):
        ClaimModel(xi=Exponential(1.0), tau=Deterministic(0.0))


def test_claim_model_variances():
    cm = ClaimModel(xi=Exponential(1.0), tau=GammaDist(shape=2.0, rate=2.0))
    assert cm.variance("xi") == pytest.approx(1.0)
    assert cm.variance("tau") == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# Premium rates
# ---------------------------------------------------------------------------

def test_inverse_rate_values_and_floor():
    rate = CriticalInverseRate(v_c=1.0, theta=3.0)
    assert evaluate_rate(rate, 0.0) == 4.0  # floored at z_min = 1
    assert evaluate_rate(rate, 0.5) == 4.0
    assert evaluate_rate(rate, 3.0) == 2.0
    assert rate.sup == 4.0
    with pytest.raises(ValueError):
        evaluate_rate(rate, -1.0)


def test_power_rate_values():
    rate = CriticalPowerRate(v_c=1.0, theta=2.0, alpha=0.5)
    assert evaluate_rate(rate, 4.0) == 2.0
    assert evaluate_rate(rate, 0.25) == 3.0  # floored
    with pytest.raises(ValueError):
        CriticalPowerRate(v_c=1.0, theta=1.0, alpha=1.0)


def test_tabulated_rate_lookup_and_validation():
    rate = TabulatedRate(breakpoints=((0.0, 2.0), (5.0, 1.5), (10.0, 1.2)))
    assert rate.value(0.0) == 2.0
    assert rate.value(4.99) == 2.0
    assert rate.value(5.0) == 1.5
    assert rate.value(100.0) == 1.2
    assert rate.sup == 2.0
    with pytest.raises(ValueError):
        TabulatedRate(breakpoints=((5.0, 1.0), (1.0, 2.0)))
    with pytest.raises(ValueError):
        TabulatedRate(breakpoints=())


@given(z=st.floats(0.0, 1e6))
@settings(max_examples=50, deadline=None)
def test_critical_rates_decrease_toward_v_c(z):
    inv = CriticalInverseRate(v_c=1.0, theta=3.0)
    pw = CriticalPowerRate(v_c=1.0, theta=2.0, alpha=0.5)
    assert inv.value(z) > 1.0
    assert pw.value(z) > 1.0
    assert inv.value(z) >= inv.value(z + 1.0)
    assert pw.value(z) >= pw.value(z + 1.0)


# ---------------------------------------------------------------------------
# Assembled model and derived constants
# ---------------------------------------------------------------------------

def test_critical_rate_value():
    cm = ClaimModel(xi=Exponential(0.5), tau=Exponential(1.0))  # E xi = 2, E tau = 1
    assert critical_rate(cm) == pytest.approx(2.0)


def test_model_rejects_inconsistent_v_c():
    cm = ClaimModel(xi=Exponential(1.0), tau=Exponential(1.0))
    with pytest.raises(ValueError, match="v_c"):
        RiskModel(rate=CriticalInverseRate(v_c=2.0, theta=1.0), claims=cm)


def test_bounded_claims_warn():
    cm = ClaimModel(xi=Deterministic(1.0), tau=Exponential(1.0))
    with pytest.warns(UserWarning, match="bounded"):
        RiskModel(rate=ConstantRate(2.0), claims=cm)


def test_derived_constants_exp_exp(model_inverse_transient):
    consts = derived_constants(model_inverse_transient)
    assert consts.v_c == pytest.approx(1.0)
    assert consts.b == pytest.approx(2.0)  # Var xi + v_c^2 Var tau = 1 + 1
    assert consts.mu_drift == pytest.approx(3.0)
    assert consts.rho == pytest.approx(2.0)  # 2*3*1/2 - 1
    assert consts.threshold == pytest.approx(1.0)  # b / (2 E tau)


def test_rho_matches_exp_exp_identity():
    # For exp/exp models rho = theta mu^2 / lam - 1 must coincide with
    # the moment form 2 theta E(tau) / b - 1.
    lam, mu, theta = 2.0, 3.0, 1.5
    cm = ClaimModel(xi=Exponential(mu), tau=Exponential(lam))
    model = RiskModel(rate=CriticalInverseRate(v_c=lam / mu, theta=theta), claims=cm)
    consts = derived_constants(model)
    assert consts.rho == pytest.approx(theta * mu**2 / lam - 1.0)


def test_derived_constants_power_family_has_no_rho(model_power):
    consts = derived_constants(model_power)
    assert consts.rho is None
    assert consts.mu_drift == pytest.approx(2.0)


def test_pareto_moments_finite_up_to_tail_exponent():
    # Tail exponent 2 + beta = 2.5: moments of order < 2.5 are finite.
    xi = ParetoType(beta=0.5, scale=1.0)
    assert xi.moment(1) == pytest.approx(2.0 / 3.0)  # scale / (1 + beta)
    assert xi.moment(2) == pytest.approx(8.0 / 3.0)
    assert xi.moment(3) == math.inf
    assert xi.tail(0.0) == 1.0
    assert xi.tail(1.0) == pytest.approx(2.0 ** (-2.5))


def test_theta_requires_critical_family():
    cm = ClaimModel(xi=Exponential(1.0), tau=Exponential(1.0))
    model = RiskModel(rate=ConstantRate(2.0), claims=cm)
    with pytest.raises(ValueError):
        _ = model.theta
    assert not model.is_critical_family
