"""Lyapunov test functions, drift recursion, envelopes, and the classifier."""

import math

import numpy as np
import pytest

from ruinflow.chain import Caps
from ruinflow.lyapunov import (
    Classification,
    a_coefficients,
    bound_envelope,
    build_profile_inverse,
    build_profile_power,
    classify,
    drift_check,
    power_case_shape,
    profile_table,
    r_coefficients,
    recursion_residual,
)
from ruinflow.models import (
    ClaimModel,
    ConstantRate,
    CriticalInverseRate,
    CriticalPowerRate,
    Exponential,
    RiskModel,
)


@pytest.fixture(scope="module")
def profile(model_inverse_transient):
    return build_profile_inverse(model_inverse_transient)


# ---------------------------------------------------------------------------
# Inverse-family profile: closed-form values
# ---------------------------------------------------------------------------

def test_q_worked_examples(profile):
    # q(x) = (rho+1) min(1, 1/x) with rho = 2.
    assert float(profile.q(0.5)) == pytest.approx(3.0)
    assert float(profile.q(2.0)) == pytest.approx(1.5)


def test_Q_worked_example(profile):
    assert float(profile.Q(2.0)) == pytest.approx(3.0 * (1.0 + math.log(2.0)), rel=1e-12)


def test_U_worked_example(profile):
    assert float(profile.U(4.0)) == pytest.approx(math.exp(-3.0) / 32.0, rel=1e-12)


def test_p_envelope_shape(profile):
    assert float(profile.p(0.5)) == 1.0
    assert float(profile.p(4.0)) == pytest.approx(0.125)
    assert profile.C_p == 3.0
    # p is decreasing and integrable: int_1^inf x^-1.5 dx = 2, plus 1 below 1.
    xs = np.geomspace(0.1, 1e4, 100)
    assert np.all(np.diff(profile.p(xs)) <= 1e-15)


def test_U_is_continuous_and_decreasing(profile):
    xs = np.linspace(0.0, 6.0, 601)
    for f in (profile.U, profile.U_plus, profile.U_minus):
        vals = f(xs)
        assert np.all(np.diff(vals) < 0)
        # No jump across the piecewise boundary at x = 1.
        assert abs(float(f(1.0 - 1e-9)) - float(f(1.0 + 1e-9))) < 1e-8


def test_U_pm_sandwich_U(profile):
    # e^{-Q-P} <= e^{-Q} <= e^{-Q+P} pointwise, hence the same for the tails.
    xs = np.array([0.3, 1.0, 2.0, 4.0, 10.0, 100.0])
    assert np.all(profile.U_plus(xs) < profile.U(xs))
    assert np.all(profile.U(xs) < profile.U_minus(xs))


def test_U_pm_match_direct_quadrature(profile):
    from scipy import integrate

    for sign, f in ((1.0, profile.U_plus), (-1.0, profile.U_minus)):
        def density(y):
            q = float(profile.Q(y))
            pc = 3.0 - 2.0 / math.sqrt(y) if y >= 1.0 else y
            return math.exp(-(q + sign * pc))

        val, _ = integrate.quad(density, 4.0, np.inf, limit=400, epsabs=0.0, epsrel=1e-12)
        assert float(f(4.0)) == pytest.approx(val, rel=1e-9)


def test_U_pm_decay_like_x_to_minus_rho(profile):
    big = 1e6
    for f in (profile.U_plus, profile.U_minus):
        ratio = float(f(2.0 * big) / f(big))
        assert ratio == pytest.approx(2.0**-2.0, rel=1e-3)


def test_profile_requires_transient_model(model_inverse_recurrent, model_power):
    with pytest.raises(ValueError, match="rho"):
        build_profile_inverse(model_inverse_recurrent)
    with pytest.raises(ValueError):
        build_profile_inverse(model_power)


def test_profile_table_layout(profile):
    table = profile_table(profile, [2.0, 4.0])
    assert table.shape == (2, 6)
    assert table[1, 3] == pytest.approx(math.exp(-3.0) / 32.0)


# ---------------------------------------------------------------------------
# Power-family recursion
# ---------------------------------------------------------------------------

def test_a_coefficient_worked_examples(model_power):
    a = a_coefficients(model_power, theta=2.0, gamma=3)
    assert a[1, 0] == pytest.approx(0.0, abs=1e-12)  # E(v_c tau - xi) = 0
    assert a[1, 1] == pytest.approx(2.0)  # theta E tau
    assert a[2, 0] == pytest.approx(2.0)  # E(v_c tau - xi)^2 = b


def test_a_coefficients_reject_infinite_moments(model_heavy):
    with pytest.raises(ValueError, match="infinite"):
        a_coefficients(model_heavy, theta=8.0, gamma=3)  # needs E xi^3


def test_r_recursion_worked_example(model_power):
    rc = r_coefficients(model_power, theta=2.0, alpha=0.5)
    assert rc.gamma == 3  # smallest k with alpha k > 1
    assert rc.r[0] == pytest.approx(2.0)  # 2 theta E tau / b
    # r_2 = r_1 (a_30 r_1 / 3 - a_21) / a_20 with a_30 = 2 E tau^3 - ... = 0
    # for exp/exp; numerically r_2 = -4.
    assert rc.r[1] == pytest.approx(-4.0)
    assert rc.log_corrected  # alpha = 1/(gamma-1)
    assert rc.b_shift >= 2.0 and math.log2(rc.b_shift).is_integer()


def test_r_recursion_residual_vanishes(model_power):
    rc = r_coefficients(model_power, theta=2.0, alpha=0.5)
    residual = recursion_residual(model_power, 2.0, 0.5, rc.r)
    assert np.all(np.abs(residual) < 1e-10)


def test_r_recursion_residual_detects_wrong_solution(model_power):
    residual = recursion_residual(model_power, 2.0, 0.5, (2.0, 0.0))
    assert np.max(np.abs(residual)) > 1e-3


def test_power_profile_q_monotone(model_power):
    prof = build_profile_power(model_power)
    xs = np.geomspace(1e-3, 1e4, 400)
    q = prof.q(xs)
    assert np.all(np.diff(q) <= 1e-15)
    assert np.all(q > 0)
    assert prof.U_plus is None and prof.U_minus is None


def test_power_case_shape_log_corrected(model_power):
    prof = build_profile_power(model_power)
    pc = prof.power_case
    assert pc.log_corrected
    # Boundary case: x^{alpha - r_{gamma-1}} exp{-2 r_1 sqrt(x)} up to the
    # b_shift offset inside the constants.
    x = 400.0
    expected = x ** (0.5 - pc.r[-1]) * math.exp(-2.0 * pc.r[0] * math.sqrt(x))
    assert power_case_shape(prof, x) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        power_case_shape(prof, 0.0)


def test_power_case_shape_generic_branch():
    cm = ClaimModel(xi=Exponential(1.0), tau=Exponential(1.0))
    model = RiskModel(rate=CriticalPowerRate(v_c=1.0, theta=2.0, alpha=0.4), claims=cm)
    prof = build_profile_power(model)
    pc = prof.power_case
    assert pc.gamma == 3 and not pc.log_corrected
    x = 100.0
    s = sum(r * x ** (1.0 - 0.4 * j) / (1.0 - 0.4 * j) for j, r in enumerate(pc.r, 1))
    assert power_case_shape(prof, x) == pytest.approx(x**0.4 * math.exp(-s), rel=1e-12)


# ---------------------------------------------------------------------------
# Drift checks and envelopes
# ---------------------------------------------------------------------------

def test_drift_check_finds_threshold(profile, model_inverse_transient):
    report = drift_check(
        profile, model_inverse_transient, [5.0, 20.0, 80.0], n_draws=100_000, seed=7
    )
    assert report.x_hat is not None and report.x_hat <= 80.0
    assert profile.x_hat == report.x_hat
    # Small levels violate the supermartingale sign decisively.
    assert report.drift_minus[0] > 3.0 * report.se_minus[0]


def test_drift_check_validation(profile, model_inverse_transient, model_power):
    with pytest.raises(ValueError):
        drift_check(profile, model_inverse_transient, [5.0], n_draws=1)
    power_prof = build_profile_power(model_power)
    with pytest.raises(ValueError, match="U_plus"):
        drift_check(power_prof, model_power, [5.0], n_draws=100)


def test_bound_envelope_brackets_truth(profile, model_inverse_transient):
    profile.x_hat = 40.0
    lo, hi = bound_envelope(
        profile, model_inverse_transient, 100.0,
        caps=Caps(max_steps=10_000), n_paths=2000, seed=11,
    )
    assert 0.0 < lo < hi <= 1.0
    # The upper bound is U_-(x)/U_-(x_hat); frozen sanity value for x = 100.
    assert hi == pytest.approx(
        float(profile.U_minus(100.0) / profile.U_minus(40.0)), rel=1e-12
    )
    with pytest.raises(ValueError):
        bound_envelope(profile, model_inverse_transient, 10.0)  # below x_hat


def test_bound_envelope_requires_threshold(model_inverse_transient):
    fresh = build_profile_inverse(model_inverse_transient)
    with pytest.raises(ValueError, match="x_hat"):
        bound_envelope(fresh, model_inverse_transient, 100.0)


def test_upper_envelope_ratio_worked_example(profile):
    # U_-(100)/U_-(20) ~ (100/20)^-2 = 0.04; the e^{-2/sqrt(x)} perturbation
    # factor lifts the ratio about 20% above the pure power law at these
    # moderate levels (it decays like 2/sqrt(x), so 20 is still far from the
    # asymptotic regime checked in test_U_pm_decay_like_x_to_minus_rho).
    ratio = float(profile.U_minus(100.0) / profile.U_minus(20.0))
    assert ratio == pytest.approx(0.0486, rel=0.01)
    assert ratio == pytest.approx(0.04, rel=0.3)


# ---------------------------------------------------------------------------
# Classifier
# ---------------------------------------------------------------------------

def test_classifier_all_branches(model_inverse_transient, model_inverse_recurrent):
    cm = ClaimModel(xi=Exponential(1.0), tau=Exponential(1.0))
    assert classify(model_inverse_transient) is Classification.TRANSIENT
    assert classify(model_inverse_recurrent) is Classification.RECURRENT
    boundary = RiskModel(rate=CriticalInverseRate(v_c=1.0, theta=1.0), claims=cm)
    assert classify(boundary) is Classification.INCONCLUSIVE
    non_critical = RiskModel(rate=ConstantRate(2.0), claims=cm)
    assert classify(non_critical) is Classification.INCONCLUSIVE


def test_classifier_power_family(model_power):
    # theta = 2 > threshold 1: transient.  Below threshold the power family
    # approaches the critical rate too slowly to conclude recurrence.
    assert classify(model_power) is Classification.TRANSIENT
    cm = ClaimModel(xi=Exponential(1.0), tau=Exponential(1.0))
    slow = RiskModel(rate=CriticalPowerRate(v_c=1.0, theta=0.5, alpha=0.5), claims=cm)
    assert classify(slow) is Classification.INCONCLUSIVE
