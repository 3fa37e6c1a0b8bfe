"""Deterministic reserve flow: exact solutions, RK4 agreement, bounds."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruinflow.flow import FlowSolver, flow, flow_increment_bounds
from ruinflow.models import (
    ClaimModel,
    ConstantRate,
    CriticalInverseRate,
    CriticalPowerRate,
    Exponential,
    RiskModel,
    TabulatedRate,
)

INVERSE = CriticalInverseRate(v_c=1.0, theta=3.0)

# Frozen oracle: implicit solve of z - 3 log((z+3)/13) = x + t for
# v(z) = 1 + 3/max(z,1), x = 10, t = 1, verified against adaptive RK4 and
# scipy.integrate.solve_ivp at rtol 1e-12.
FLOW_10_1 = 11.282192338263922


def test_implicit_flow_matches_frozen_oracle():
    solver = FlowSolver(INVERSE, method="implicit")
    assert solver.flow(10.0, 1.0) == pytest.approx(FLOW_10_1, rel=1e-12)


def test_rk4_agrees_with_implicit_on_oracle_point():
    assert FlowSolver(INVERSE, method="rk4").flow(10.0, 1.0) == pytest.approx(
        FLOW_10_1, rel=1e-9
    )


def test_constant_rate_flow_is_exact():
    solver = FlowSolver(ConstantRate(2.5))
    assert solver.flow(3.0, 4.0) == 13.0


def test_flow_at_zero_time_is_identity():
    assert FlowSolver(INVERSE).flow(7.0, 0.0) == 7.0


def test_tabulated_flow_steps_through_breakpoints_exactly():
    # v = 2 below level 5, 1 above: from x=3, 1 time unit at rate 2 reaches 5,
    # then rate 1 for the remaining time.
    rate = TabulatedRate(breakpoints=((0.0, 2.0), (5.0, 1.0)))
    solver = FlowSolver(rate)
    assert solver.flow(3.0, 1.0) == pytest.approx(5.0, rel=1e-14)
    assert solver.flow(3.0, 3.0) == pytest.approx(7.0, rel=1e-14)
    assert solver.flow(6.0, 2.0) == pytest.approx(8.0, rel=1e-14)


@given(x=st.floats(0.0, 500.0), t=st.floats(0.0, 100.0))
@settings(max_examples=60, deadline=None)
def test_rk4_matches_implicit_everywhere(x, t):
    exact = FlowSolver(INVERSE, method="implicit").flow(x, t)
    approx = FlowSolver(INVERSE, method="rk4").flow(x, t)
    assert abs(approx - exact) <= 1e-8 * max(exact, 1.0)


@given(x=st.floats(0.0, 100.0), t=st.floats(0.0, 20.0))
@settings(max_examples=40, deadline=None)
def test_flow_increment_bracketed_by_rate_bounds(x, t):
    # Rates decrease, so the increment sits between t*v(far end) and t*v(x).
    solver = FlowSolver(INVERSE, method="implicit")
    inc = solver.flow(x, t) - x
    assert t * 1.0 - 1e-9 <= inc <= t * INVERSE.value(x) + 1e-9


def test_power_rate_flow_monotone_and_superlinear():
    rate = CriticalPowerRate(v_c=1.0, theta=2.0, alpha=0.5)
    solver = FlowSolver(rate)
    v1, v2 = solver.flow(4.0, 1.0), solver.flow(4.0, 2.0)
    assert v2 > v1 > 4.0 + 1.0  # above the critical drift
    assert v1 < 4.0 + rate.value(4.0)  # below the frozen-rate bound


def test_flow_increment_bounds_worked_example(model_inverse_transient):
    # x = 10, t = 1: upper = v(10) = 1.3; lower = v(10 + 1.3) = 1.2655 (no
    # envelope p configured on the model).
    lo, hi = flow_increment_bounds(model_inverse_transient, 10.0, 1.0)
    assert hi == pytest.approx(1.3, rel=1e-12)
    assert lo == pytest.approx(1.0 + 3.0 / 11.3, rel=1e-12)
    assert lo < hi


def test_flow_increment_bounds_contain_true_increment(model_inverse_transient):
    solver = FlowSolver(INVERSE, method="implicit")
    for x, t in [(2.0, 0.5), (10.0, 1.0), (50.0, 3.0)]:
        lo, hi = flow_increment_bounds(model_inverse_transient, x, t)
        inc = solver.flow(x, t) - x
        assert lo - 1e-12 <= inc <= hi + 1e-12


def test_flow_increment_bounds_reject_non_critical():
    cm = ClaimModel(xi=Exponential(1.0), tau=Exponential(1.0))
    model = RiskModel(rate=ConstantRate(2.0), claims=cm)
    with pytest.raises(ValueError):
        flow_increment_bounds(model, 1.0, 1.0)


def test_solver_method_validation():
    with pytest.raises(ValueError):
        FlowSolver(INVERSE, method="analytic")
    with pytest.raises(ValueError):
        FlowSolver(ConstantRate(1.0), method="implicit")
    with pytest.raises(ValueError):
        FlowSolver(INVERSE, method="bogus")
    with pytest.raises(ValueError):
        FlowSolver(INVERSE).flow(-1.0, 1.0)


def test_functional_alias():
    solver = FlowSolver(ConstantRate(1.0))
    assert flow(solver, 2.0, 3.0) == 5.0
