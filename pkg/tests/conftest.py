"""Shared fixtures: canonical models and the acceptance scale switch."""

import os

import pytest

from ruinflow.models import (
    ClaimModel,
    CriticalInverseRate,
    CriticalPowerRate,
    Exponential,
    ParetoType,
    RiskModel,
)

# Acceptance tests default to a reduced scale sized for a single-core box
# (statistical margins re-validated at that scale); set RUINFLOW_ACCEPT_FULL=1
# to run the original large-scale configuration.
FULL_SCALE = os.environ.get("RUINFLOW_ACCEPT_FULL") == "1"


def exp_exp_claims() -> ClaimModel:
    return ClaimModel(xi=Exponential(1.0), tau=Exponential(1.0))


@pytest.fixture(scope="session")
def model_inverse_transient() -> RiskModel:
    """Exp/exp, v(z) = 1 + 3/max(z, 1): transient, rho = 2."""
    return RiskModel(rate=CriticalInverseRate(v_c=1.0, theta=3.0), claims=exp_exp_claims())


@pytest.fixture(scope="session")
def model_inverse_recurrent() -> RiskModel:
    """Exp/exp, v(z) = 1 + 0.5/max(z, 1): recurrent (theta below threshold 1)."""
    return RiskModel(rate=CriticalInverseRate(v_c=1.0, theta=0.5), claims=exp_exp_claims())


@pytest.fixture(scope="session")
def model_power() -> RiskModel:
    """Exp/exp, v(z) = 1 + 2/max(z, 1)^0.5: stretched-exponential decay."""
    return RiskModel(
        rate=CriticalPowerRate(v_c=1.0, theta=2.0, alpha=0.5), claims=exp_exp_claims()
    )


@pytest.fixture(scope="session")
def model_heavy() -> RiskModel:
    """Pareto(beta=1, scale=2) claims, exp(1) inter-claim times, theta=8: rho=3 > beta."""
    claims = ClaimModel(xi=ParetoType(beta=1.0, scale=2.0), tau=Exponential(1.0))
    return RiskModel(rate=CriticalInverseRate(v_c=1.0, theta=8.0), claims=claims)
