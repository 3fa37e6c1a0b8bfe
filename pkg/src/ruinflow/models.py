"""Premium-rate functions, claim distributions, and the assembled risk model.

The reserve process earns premium at a level-dependent rate ``v(z)`` and pays
claims ``xi`` at renewal epochs separated by ``tau``.  The critical rate
``v_c = E(xi)/E(tau)`` separates ruin-certain from ruin-avoidable regimes;
the interesting models here have ``v(z) -> v_c`` from above as the reserve
grows, at speed ``theta/z`` or ``theta/z^alpha``.

Everything in this module is immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import rng

__all__ = [
    "Exponential",
    "GammaDist",
    "ParetoType",
    "Deterministic",
    "ClaimModel",
    "ConstantRate",
    "CriticalInverseRate",
    "CriticalPowerRate",
    "TabulatedRate",
    "RiskModel",
    "DerivedConstants",
    "critical_rate",
    "evaluate_rate",
    "derived_constants",
]

# Premium-rate kind codes shared with the compiled kernels.
RATE_CONSTANT = 0
RATE_INVERSE = 1
RATE_POWER = 2
RATE_TABULATED = 3


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Exponential:
    """Exponential distribution with the given rate."""

    rate: float

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    def moment(self, k: int) -> float:
        """Exact k-th moment E X^k = k! / rate^k."""
        return math.factorial(k) / self.rate**k

    def tail(self, x: float) -> float:
        """Survival function P{X > x}."""
        return math.exp(-self.rate * x) if x > 0 else 1.0

    @property
    def bounded(self) -> bool:
        return False

    def kernel_encoding(self) -> Tuple[int, float, float]:
        return rng.EXPONENTIAL, self.rate, 0.0


@dataclass(frozen=True)
class GammaDist:
    """Gamma distribution with shape/rate parameterization."""

    shape: float
    rate: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError(
                f"gamma shape and rate must be positive, got {self.shape}, {self.rate}"
            )

    def moment(self, k: int) -> float:
        """Exact k-th moment: prod_{i<k} (shape + i) / rate^k."""
        out = 1.0
        for i in range(k):
            out *= (self.shape + i) / self.rate
        return out

    def tail(self, x: float) -> float:
        if x <= 0:
            return 1.0
        from scipy.special import gammaincc

        return float(gammaincc(self.shape, self.rate * x))

    @property
    def bounded(self) -> bool:
        return False

    def kernel_encoding(self) -> Tuple[int, float, float]:
        return rng.GAMMA, self.shape, self.rate


@dataclass(frozen=True)
class ParetoType:
    """Shifted Pareto with survival P{X > x} = (1 + x/scale)^-(2+beta).

    The tail index is written as ``2 + beta`` so that ``beta`` measures how
    much integrability is available beyond the second moment: moments of
    order ``k`` are finite exactly when ``k < 2 + beta``.
    """

    beta: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise ValueError(f"pareto beta must be positive, got {self.beta}")
        if not self.scale > 0:
            raise ValueError(f"pareto scale must be positive, got {self.scale}")

    @property
    def exponent(self) -> float:
        """Tail exponent 2 + beta of the survival function."""
        return 2.0 + self.beta

    def moment(self, k: int) -> float:
        a = self.exponent
        if k >= a:
            return math.inf
        # X = scale * (P - 1) with P standard Pareto(a) on [1, inf):
        # E P^j = a / (a - j).
        out = 0.0
        for j in range(k + 1):
            out += math.comb(k, j) * (-1.0) ** (k - j) * a / (a - j)
        return self.scale**k * out

    def tail(self, x: float) -> float:
        if x <= 0:
            return 1.0
        return (1.0 + x / self.scale) ** (-self.exponent)

    @property
    def bounded(self) -> bool:
        return False

    def kernel_encoding(self) -> Tuple[int, float, float]:
        return rng.PARETO, self.exponent, self.scale


@dataclass(frozen=True)
class Deterministic:
    """Point mass at a fixed non-negative value."""

    value: float

    def __post_init__(self) -> None:
        if not self.value >= 0:
            raise ValueError(f"deterministic value must be >= 0, got {self.value}")

    def moment(self, k: int) -> float:
        return self.value**k

    def tail(self, x: float) -> float:
        return 1.0 if x < self.value else 0.0

    @property
    def bounded(self) -> bool:
        return True

    def kernel_encoding(self) -> Tuple[int, float, float]:
        return rng.DETERMINISTIC, self.value, 0.0


Distribution = Exponential | GammaDist | ParetoType | Deterministic


@dataclass(frozen=True)
class ClaimModel:
    """Independent claim sizes ``xi`` and inter-claim times ``tau``."""

    xi: Distribution
    tau: Distribution

    def __post_init__(self) -> None:
        if not math.isfinite(self.xi.moment(1)):
            raise ValueError("heavy mean claim: E xi is infinite")
        tau_mean = self.tau.moment(1)
        if not (tau_mean > 0 and math.isfinite(tau_mean)):
            raise ValueError(f"E tau must lie in (0, inf), got {tau_mean}")

    def variance(self, which: str) -> float:
        dist = self.xi if which == "xi" else self.tau
        m1, m2 = dist.moment(1), dist.moment(2)
        if not math.isfinite(m2):
            return math.inf
        return m2 - m1 * m1


# ---------------------------------------------------------------------------
# Premium rates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantRate:
    """Premium income at a fixed rate, independent of the reserve level."""

    v: float
    envelope_p: Optional[Callable[[float], float]] = None

    def __post_init__(self) -> None:
        if not self.v >= 0:
            raise ValueError(f"rate must be non-negative, got {self.v}")

    def value(self, z: float) -> float:
        return self.v

    @property
    def sup(self) -> float:
        return self.v

    def kernel_encoding(self):
        return RATE_CONSTANT, np.array([self.v]), _EMPTY, _EMPTY


@dataclass(frozen=True)
class CriticalInverseRate:
    """Rate v_c + theta / max(z, z_min), approaching v_c like theta/z.

    The functional form is only meaningful for large levels; below ``z_min``
    the level is floored so the rate stays bounded.
    """

    v_c: float
    theta: float
    z_min: float = 1.0
    envelope_p: Optional[Callable[[float], float]] = None

    def __post_init__(self) -> None:
        if not (self.v_c > 0 and self.theta > 0 and self.z_min > 0):
            raise ValueError("v_c, theta, z_min must all be positive")

    def value(self, z: float) -> float:
        return self.v_c + self.theta / max(z, self.z_min)

    @property
    def sup(self) -> float:
        return self.v_c + self.theta / self.z_min

    @property
    def alpha(self) -> float:
        return 1.0

    def kernel_encoding(self):
        return RATE_INVERSE, np.array([self.v_c, self.theta, self.z_min]), _EMPTY, _EMPTY


@dataclass(frozen=True)
class CriticalPowerRate:
    """Rate v_c + theta / max(z, z_min)^alpha with alpha in (0, 1).

    Converges to the critical rate more slowly than the inverse family, which
    turns the power-law decay of the ruin probability into a stretched
    exponential.
    """

    v_c: float
    theta: float
    alpha: float
    z_min: float = 1.0
    envelope_p: Optional[Callable[[float], float]] = None

    def __post_init__(self) -> None:
        if not (self.v_c > 0 and self.theta > 0 and self.z_min > 0):
            raise ValueError("v_c, theta, z_min must all be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    def value(self, z: float) -> float:
        return self.v_c + self.theta / max(z, self.z_min) ** self.alpha

    @property
    def sup(self) -> float:
        return self.v_c + self.theta / self.z_min**self.alpha

    def kernel_encoding(self):
        return (
            RATE_POWER,
            np.array([self.v_c, self.theta, self.alpha, self.z_min]),
            _EMPTY,
            _EMPTY,
        )


@dataclass(frozen=True)
class TabulatedRate:
    """Piecewise-constant rate given by sorted (level, rate) breakpoints.

    The rate at level ``z`` is the rate of the greatest breakpoint level not
    exceeding ``z``; levels below the first breakpoint use the first rate.
    """

    breakpoints: Tuple[Tuple[float, float], ...]
    envelope_p: Optional[Callable[[float], float]] = None

    def __post_init__(self) -> None:
        bps = tuple((float(z), float(v)) for z, v in self.breakpoints)
        if not bps:
            raise ValueError("tabulated rate needs at least one breakpoint")
        levels = [z for z, _ in bps]
        if levels != sorted(levels) or len(set(levels)) != len(levels):
            raise ValueError("breakpoint levels must be strictly increasing")
        if any(v < 0 for _, v in bps):
            raise ValueError("rates must be non-negative")
        object.__setattr__(self, "breakpoints", bps)

    def value(self, z: float) -> float:
        out = self.breakpoints[0][1]
        for level, v in self.breakpoints:
            if z >= level:
                out = v
            else:
                break
        return out

    @property
    def sup(self) -> float:
        return max(v for _, v in self.breakpoints)

    def kernel_encoding(self):
        levels = np.array([z for z, _ in self.breakpoints])
        values = np.array([v for _, v in self.breakpoints])
        return RATE_TABULATED, _EMPTY, levels, values


PremiumRate = ConstantRate | CriticalInverseRate | CriticalPowerRate | TabulatedRate

_EMPTY = np.empty(0, dtype=np.float64)

_CRITICAL_KINDS = (CriticalInverseRate, CriticalPowerRate)


# ---------------------------------------------------------------------------
# Assembled model
# ---------------------------------------------------------------------------

def critical_rate(claims: ClaimModel) -> float:
    """Critical premium rate v_c = E(xi) / E(tau).

    A constant premium rate above this value makes ruin avoidable; below it,
    ruin is certain.

    Raises:
        ValueError: if E(xi) is infinite (``ClaimModel`` already rejects
            infinite means, so this only triggers for raw distributions).
    """
    mean_xi = claims.xi.moment(1)
    if not math.isfinite(mean_xi):
        raise ValueError("heavy mean claim: E xi is infinite")
    return mean_xi / claims.tau.moment(1)


def evaluate_rate(rate: PremiumRate, z: float) -> float:
    """Premium rate at reserve level ``z`` (z >= 0)."""
    if z < 0:
        raise ValueError(f"level must be non-negative, got {z}")
    return rate.value(z)


@dataclass(frozen=True)
class DerivedConstants:
    """Constants derived from a risk model.

    Attributes:
        v_c: critical rate E(xi)/E(tau).
        b: jump-variance constant Var(xi) + v_c^2 Var(tau).
        mu_drift: drift scale theta * E(tau) (critical families only).
        rho: decay exponent 2 theta E(tau)/b - 1 (inverse family only).
        threshold: recurrence threshold b / (2 E(tau)) for theta.
    """

    v_c: float
    b: float
    mu_drift: Optional[float]
    rho: Optional[float]
    threshold: float


@dataclass(frozen=True)
class RiskModel:
    """Premium rate plus claim model, with derived constants on demand."""

    rate: PremiumRate
    claims: ClaimModel

    def __post_init__(self) -> None:
        if isinstance(self.rate, _CRITICAL_KINDS):
            v_c = critical_rate(self.claims)
            if not math.isclose(self.rate.v_c, v_c, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(
                    f"rate spec v_c={self.rate.v_c} disagrees with "
                    f"E(xi)/E(tau)={v_c}"
                )
        if self.claims.xi.bounded:
            warnings.warn(
                "claim sizes are bounded: positivity of the ruin probability "
                "is not guaranteed for every start level",
                stacklevel=2,
            )

    @property
    def v_c(self) -> float:
        return critical_rate(self.claims)

    @property
    def v_bar(self) -> float:
        return self.rate.sup

    @property
    def theta(self) -> float:
        if not isinstance(self.rate, _CRITICAL_KINDS):
            raise ValueError("theta is only defined for critical rate families")
        return self.rate.theta

    @property
    def is_critical_family(self) -> bool:
        return isinstance(self.rate, _CRITICAL_KINDS)


def derived_constants(model: RiskModel) -> DerivedConstants:
    """Compute (v_c, b, mu_drift, rho, recurrence threshold).

    Raises:
        ValueError: if Var(xi) or Var(tau) is infinite, naming the culprit.
    """
    var_xi = model.claims.variance("xi")
    var_tau = model.claims.variance("tau")
    bad = [name for name, v in (("xi", var_xi), ("tau", var_tau)) if not math.isfinite(v)]
    if bad:
        raise ValueError(f"infinite second moment for: {', '.join(bad)}")
    v_c = model.v_c
    b = var_xi + v_c * v_c * var_tau
    mean_tau = model.claims.tau.moment(1)
    threshold = b / (2.0 * mean_tau)
    mu_drift = rho = None
    if model.is_critical_family:
        mu_drift = model.theta * mean_tau
        if isinstance(model.rate, CriticalInverseRate) and b > 0:
            rho = 2.0 * model.theta * mean_tau / b - 1.0
    return DerivedConstants(v_c=v_c, b=b, mu_drift=mu_drift, rho=rho, threshold=threshold)
