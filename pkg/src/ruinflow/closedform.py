"""Exact and asymptotic ruin-probability oracles for exponential claims.

For exponential inter-claim times (rate lambda) and exponential claims
(rate mu) the ruin probability is proportional to::

    I(x) = int_x^inf (1/v(y)) exp{ -mu y + lambda int_0^y dz/v(z) } dy,

with an unknown proportionality constant in (0, 1).  Ratios I(x)/I(x_ref)
are therefore exact ruin-probability ratios and serve as the ground truth
the Monte Carlo engine is validated against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import integrate

from .models import (
    ConstantRate,
    CriticalInverseRate,
    CriticalPowerRate,
    Exponential,
    PremiumRate,
    RiskModel,
    TabulatedRate,
)
from .montecarlo import RuinEstimate

__all__ = [
    "ExpExpParams",
    "AsymptoticShape",
    "unnormalized_psi",
    "psi_ratio",
    "calibrate_anchor",
    "asymptotic_shape",
]


@dataclass(frozen=True)
class ExpExpParams:
    """Exponential/exponential model: tau ~ Exp(lam), xi ~ Exp(mu)."""

    lam: float
    mu: float
    rate: PremiumRate

    def __post_init__(self) -> None:
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("lam and mu must be positive")
        if isinstance(self.rate, (CriticalInverseRate, CriticalPowerRate)):
            v_c = self.lam / self.mu
            if not math.isclose(self.rate.v_c, v_c, rel_tol=1e-9):
                raise ValueError(
                    f"rate v_c={self.rate.v_c} must equal lam/mu={v_c} "
                    "for a critical exp/exp model"
                )

    @classmethod
    def from_model(cls, model: RiskModel) -> "ExpExpParams":
        xi, tau = model.claims.xi, model.claims.tau
        if not (isinstance(xi, Exponential) and isinstance(tau, Exponential)):
            raise ValueError("closed form requires exponential xi and tau")
        return cls(lam=tau.rate, mu=xi.rate, rate=model.rate)

    @property
    def v_c(self) -> float:
        return self.lam / self.mu


class _PowerExponent:
    """Cached cumulative integral D(y) = int_{z_min}^y (1/v - 1/v_c) dz.

    The power-rate family has no elementary antiderivative; an ODE solve
    with dense output is cached per rate parameters and extended on demand.
    """

    _cache: Dict[Tuple[float, float, float, float], "_PowerExponent"] = {}

    def __init__(self, rate: CriticalPowerRate) -> None:
        self.rate = rate
        self._solutions = []
        self._y_max = rate.z_min

    @classmethod
    def for_rate(cls, rate: CriticalPowerRate) -> "_PowerExponent":
        key = (rate.v_c, rate.theta, rate.alpha, rate.z_min)
        if key not in cls._cache:
            cls._cache[key] = cls(rate)
        return cls._cache[key]

    def _extend(self, y: float) -> None:
        target = max(2.0 * self._y_max, y)
        start = self._y_max
        d0 = self._solutions[-1].sol(start)[0] if self._solutions else 0.0
        sol = integrate.solve_ivp(
            lambda z, _d: [1.0 / self.rate.value(z) - 1.0 / self.rate.v_c],
            (start, target),
            [d0],
            dense_output=True,
            rtol=1e-11,
            atol=1e-14,
            max_step=max(1.0, 0.05 * start),
        )
        if not sol.success:
            raise RuntimeError(f"inner-integral ODE solve failed: {sol.message}")
        self._solutions.append(sol)
        self._y_max = target

    def __call__(self, y: float) -> float:
        zm = self.rate.z_min
        if y <= zm:
            return (y - zm) * (1.0 / self.rate.value(0.0) - 1.0 / self.rate.v_c)
        while y > self._y_max:
            self._extend(y)
        for sol in self._solutions:
            if sol.t[0] <= y <= sol.t[-1]:
                return float(sol.sol(y)[0])
        raise AssertionError("dense-output segments should cover the range")


def _exponent(params: ExpExpParams, y: float) -> float:
    """Well-conditioned evaluation of -mu y + lambda int_0^y dz/v(z).

    For critical families (v_c = lam/mu) this equals
    lambda * int_0^y (1/v - 1/v_c) dz, which avoids cancelling two terms
    that grow linearly in y.
    """
    rate = params.rate
    if isinstance(rate, ConstantRate):
        return (params.lam / rate.v - params.mu) * y
    if isinstance(rate, CriticalInverseRate):
        zm = rate.z_min
        v0 = rate.value(0.0)
        below = min(y, zm) * (1.0 / v0 - 1.0 / rate.v_c)
        if y <= zm:
            return params.lam * below
        # Above the floor: int (1/v - 1/v_c) dz = -(theta/v_c^2) log(v_c z + theta).
        c = rate.theta / rate.v_c**2
        above = -c * (
            math.log(rate.v_c * y + rate.theta) - math.log(rate.v_c * zm + rate.theta)
        )
        return params.lam * (below + above)
    if isinstance(rate, CriticalPowerRate):
        D = _PowerExponent.for_rate(rate)
        zm = rate.z_min
        below = min(y, zm) * (1.0 / rate.value(0.0) - 1.0 / rate.v_c)
        return params.lam * (below + D(y))
    if isinstance(rate, TabulatedRate):
        # Piecewise-linear exact integral of 1/v.
        total = 0.0
        z_prev = 0.0
        v_prev = rate.breakpoints[0][1]
        for level, v in rate.breakpoints:
            if level >= y:
                break
            if level > z_prev:
                total += (level - z_prev) / v_prev
                z_prev = level
            v_prev = v
        total += (y - z_prev) / v_prev
        return -params.mu * y + params.lam * total
    raise TypeError(f"unsupported rate family {type(rate).__name__}")


def _check_convergent(params: ExpExpParams) -> None:
    rate = params.rate
    if isinstance(rate, ConstantRate):
        if rate.v <= params.v_c:
            raise ValueError("recurrent: psi == 1 (constant rate at or below critical)")
        return
    if isinstance(rate, CriticalInverseRate):
        rho = rate.theta * params.mu**2 / params.lam - 1.0
        if rho <= 0:
            raise ValueError("recurrent: psi == 1 (rho <= 0)")
        return
    if isinstance(rate, CriticalPowerRate):
        return  # stretched-exponential decay: always convergent
    if isinstance(rate, TabulatedRate):
        if rate.breakpoints[-1][1] <= params.v_c:
            raise ValueError("recurrent: psi == 1 (terminal rate at or below critical)")
        return
    raise TypeError(f"unsupported rate family {type(rate).__name__}")


def _integrand(params: ExpExpParams, y: float) -> float:
    return math.exp(_exponent(params, y)) / params.rate.value(y)


def unnormalized_psi(params: ExpExpParams, x: float, rel_tol: float = 1e-10) -> float:
    """The outer integral I(x); proportional to psi(x) with unknown constant.

    Integration proceeds over doubling segments; once segment contributions
    decay geometrically the remaining tail is bounded by the geometric-series
    envelope and required to sit below the relative tolerance.

    Raises:
        ValueError: when the integral diverges (recurrent regime, psi == 1)
            or x is negative.
    """
    if x < 0:
        raise ValueError(f"need x >= 0, got {x}")
    _check_convergent(params)
    f = lambda y: _integrand(params, y)
    total = 0.0
    left = x
    prev_seg = None
    for _ in range(200):
        right = 2.0 * left + 10.0
        seg, _err = integrate.quad(f, left, right, epsabs=0.0, epsrel=rel_tol, limit=200)
        total += seg
        if prev_seg is not None and prev_seg > 0 and seg < prev_seg:
            ratio = seg / prev_seg
            tail_bound = seg * ratio / (1.0 - ratio)
            if tail_bound <= rel_tol * total:
                return total
        prev_seg = seg
        left = right
    raise RuntimeError("outer integral failed to converge within segment budget")


def psi_ratio(params: ExpExpParams, x: float, x_ref: float) -> float:
    """Exact ruin-probability ratio psi(x)/psi(x_ref); the unknown
    proportionality constant cancels."""
    return unnormalized_psi(params, x) / unnormalized_psi(params, x_ref)


def calibrate_anchor(params: ExpExpParams, estimate: RuinEstimate) -> float:
    """Anchor constant c0 such that c0 * I(x) matches one MC estimate.

    Turns the ratio-only oracle into an absolute curve; the constant is
    only as good as the anchoring estimate.
    """
    if estimate.p_hat <= 0:
        raise ValueError("anchor estimate observed no ruin")
    return estimate.p_hat / unnormalized_psi(params, estimate.x)


@dataclass(frozen=True)
class AsymptoticShape:
    """Asymptotic shape of psi(x) for exp/exp critical models.

    Inverse rate:   psi(x) ~ C x^(-power),     power = theta mu^2/lam - 1.
    Power rate:     psi(x) ~ C x^prefactor_exponent
                    * exp(-C2 x^stretch_exponent),
                    C2 = theta mu^2 / (lam (1 - alpha)); when 1/alpha is an
                    integer the prefactor carries an extra logarithmic
                    correction (flagged, exponent left untouched).
    """

    kind: str  # "power" or "stretched"
    power: Optional[float] = None
    prefactor_exponent: Optional[float] = None
    stretch_exponent: Optional[float] = None
    C2: Optional[float] = None
    log_corrected: bool = False

    def value(self, x: float) -> float:
        """Shape function (up to the unknown constant) at level x > 0."""
        if self.kind == "power":
            return x**-self.power
        return x**self.prefactor_exponent * math.exp(-self.C2 * x**self.stretch_exponent)


def asymptotic_shape(model: RiskModel) -> AsymptoticShape:
    """Symbolic decay shape of psi for an exp/exp critical-rate model.

    Raises:
        ValueError: for non-exponential claims, non-critical rate families,
            or the recurrent inverse regime.
    """
    params = ExpExpParams.from_model(model)
    rate = model.rate
    if isinstance(rate, CriticalInverseRate):
        power = rate.theta * params.mu**2 / params.lam - 1.0
        if power <= 0:
            raise ValueError("recurrent: psi == 1 (rho <= 0)")
        return AsymptoticShape(kind="power", power=power)
    if isinstance(rate, CriticalPowerRate):
        alpha = rate.alpha
        inv_alpha = 1.0 / alpha
        return AsymptoticShape(
            kind="stretched",
            prefactor_exponent=alpha,
            stretch_exponent=1.0 - alpha,
            C2=rate.theta * params.mu**2 / (params.lam * (1.0 - alpha)),
            log_corrected=math.isclose(inv_alpha, round(inv_alpha), abs_tol=1e-12),
        )
    raise ValueError("asymptotic shape requires a critical rate family")
