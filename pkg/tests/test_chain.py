"""Embedded chain: jumps, paths, caps, and moment estimators."""

import math

import numpy as np
import pytest

from ruinflow.chain import (
    HIT_CAP,
    HORIZON_EXHAUSTED,
    Caps,
    RngStream,
    Ruined,
    Survived,
    jump_moment_estimates,
    sample_jump,
    simulate_path,
)
from ruinflow.models import (
    ClaimModel,
    ConstantRate,
    Deterministic,
    Exponential,
    RiskModel,
)


def test_stream_validation():
    with pytest.raises(ValueError):
        RngStream(seed=-1)
    with pytest.raises(ValueError):
        RngStream(seed=2**64)
    with pytest.raises(ValueError):
        RngStream(seed=0, stream_id=-1)


def test_stream_uniform_is_reproducible():
    s = RngStream(seed=3, stream_id=5)
    a = [s.uniform() for _ in range(3)]
    b = RngStream(seed=3, stream_id=5)
    assert a == [b.uniform() for _ in range(3)]
    assert len(set(a)) == 3  # the stream advances


def test_caps_resolution():
    assert Caps().resolve_cap(5.0) == 1e4
    assert Caps().resolve_cap(500.0) == 5e4
    assert Caps(level_cap=123.0).resolve_cap(5.0) == 123.0
    with pytest.raises(ValueError):
        Caps(max_steps=0)


def test_sample_jump_reproducible(model_inverse_transient):
    j1 = sample_jump(model_inverse_transient, 5.0, RngStream(seed=1))
    j2 = sample_jump(model_inverse_transient, 5.0, RngStream(seed=1))
    assert j1 == j2
    assert j1 != sample_jump(model_inverse_transient, 5.0, RngStream(seed=2))


def test_sample_jump_rejects_negative_level(model_inverse_transient):
    with pytest.raises(ValueError):
        sample_jump(model_inverse_transient, -1.0, RngStream(seed=0))


def test_deterministic_model_jump_is_exact():
    # tau = 1 at constant rate 2, claim = 3: jump is exactly -1.
    cm = ClaimModel(xi=Deterministic(3.0), tau=Deterministic(1.0))
    with pytest.warns(UserWarning):
        model = RiskModel(rate=ConstantRate(2.0), claims=cm)
    assert sample_jump(model, 10.0, RngStream(seed=0)) == pytest.approx(-1.0, abs=1e-12)


def test_simulate_path_records_states_and_outcome(model_inverse_transient):
    path = simulate_path(
        model_inverse_transient, 2.0, Caps(max_steps=500), RngStream(seed=4)
    )
    assert path.states[0] == 2.0
    assert np.all(path.states >= 0.0)
    if isinstance(path.outcome, Ruined):
        assert path.outcome.step == len(path.states) - 1
    else:
        assert path.outcome.reason in (HIT_CAP, HORIZON_EXHAUSTED)


def test_streaming_path_agrees_with_recorded(model_inverse_transient):
    kwargs = dict(caps=Caps(max_steps=200), stream=RngStream(seed=11))
    rec = simulate_path(model_inverse_transient, 2.0, record_states=True, **kwargs)
    kwargs["stream"] = RngStream(seed=11)
    slim = simulate_path(model_inverse_transient, 2.0, record_states=False, **kwargs)
    assert type(rec.outcome) is type(slim.outcome)
    assert slim.states.tolist() == [2.0]


def test_horizon_exhaustion_outcome(model_inverse_transient):
    path = simulate_path(
        model_inverse_transient, 50.0, Caps(max_steps=3), RngStream(seed=0)
    )
    assert path.outcome == Survived(reason=HORIZON_EXHAUSTED)
    assert len(path.states) == 4


def test_start_above_cap_hits_cap_immediately(model_inverse_transient):
    path = simulate_path(
        model_inverse_transient, 5.0, Caps(max_steps=100, level_cap=4.0),
        RngStream(seed=0),
    )
    assert path.outcome == Survived(reason=HIT_CAP)


def test_jump_moments_match_constants(model_inverse_transient):
    # m_1(x) ~ theta E(tau) / x and m_2(x) ~ b at high levels.
    x = 200.0
    moments = jump_moment_estimates(
        model_inverse_transient, x, 2, 200_000, RngStream(seed=6)
    )
    m1, m2 = moments
    assert m1.order == 1 and m2.order == 2
    assert x * m1.value == pytest.approx(3.0, abs=0.1)
    assert m2.value == pytest.approx(2.0, abs=0.1)
    assert m1.stderr < 1e-3  # control variate: noise far below theta E tau / x


def test_control_variate_reduces_first_moment_noise(model_inverse_transient):
    plain = jump_moment_estimates(
        model_inverse_transient, 1000.0, 1, 50_000, RngStream(seed=8),
        reduce_variance=False,
    )[0]
    cv = jump_moment_estimates(
        model_inverse_transient, 1000.0, 1, 50_000, RngStream(seed=8),
        reduce_variance=True,
    )[0]
    assert cv.stderr < plain.stderr / 100.0


def test_moment_estimator_validation(model_inverse_transient):
    with pytest.raises(ValueError):
        jump_moment_estimates(model_inverse_transient, 1.0, 0, 10, RngStream(seed=0))
    with pytest.raises(ValueError):
        jump_moment_estimates(model_inverse_transient, 1.0, 1, 0, RngStream(seed=0))
