"""Monte Carlo estimation of ruin probabilities and chain diagnostics.

Paths are censored at a level cap (transience makes this a controlled
downward bias) and a step horizon; the estimator carries both censoring
counts plus a pessimistic variant counting exhausted-horizon paths as
ruined, bracketing the truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import _kernels, rng
from .chain import Caps, encode_model
from .models import RiskModel, derived_constants

__all__ = [
    "RuinEstimate",
    "GammaLimitReport",
    "estimate_ruin",
    "ruin_curve",
    "merge_estimates",
    "decay_exponent_fit",
    "gamma_limit_test",
]


@dataclass(frozen=True)
class RuinEstimate:
    """Ruin-probability estimate at one start level.

    ``p_hat`` counts only observed ruins; ``p_hat_pessimistic`` additionally
    counts horizon-exhausted paths as ruined.  The truth lies between them
    up to cap censoring, which biases both downward.
    """

    x: float
    p_hat: float
    half_width: float
    n_paths: int
    n_ruined: int
    censored_cap: int
    censored_horizon: int
    p_hat_pessimistic: float

    @property
    def rel_half_width(self) -> float:
        """CI half-width relative to the point estimate (inf when p_hat=0)."""
        return self.half_width / self.p_hat if self.p_hat > 0 else math.inf


def _make_estimate(
    x: float,
    n_paths: int,
    n_ruined: int,
    censored_cap: int,
    censored_horizon: int,
    clopper_pearson: bool,
) -> RuinEstimate:
    p_hat = n_ruined / n_paths
    if clopper_pearson:
        lo = 0.0 if n_ruined == 0 else float(
            stats.beta.ppf(0.025, n_ruined, n_paths - n_ruined + 1)
        )
        hi = 1.0 if n_ruined == n_paths else float(
            stats.beta.ppf(0.975, n_ruined + 1, n_paths - n_ruined)
        )
        half_width = 0.5 * (hi - lo)
    else:
        half_width = 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / n_paths)
    return RuinEstimate(
        x=x,
        p_hat=p_hat,
        half_width=half_width,
        n_paths=n_paths,
        n_ruined=n_ruined,
        censored_cap=censored_cap,
        censored_horizon=censored_horizon,
        p_hat_pessimistic=(n_ruined + censored_horizon) / n_paths,
    )


def estimate_ruin(
    model: RiskModel,
    x: float,
    n_paths: int,
    caps: Optional[Caps] = None,
    seed: int = 0,
    stream_offset: int = 0,
    clopper_pearson: bool = False,
) -> RuinEstimate:
    """Estimate psi(x) from ``n_paths`` independent paths.

    Path ``i`` uses RNG stream ``stream_offset + i``; disjoint offsets give
    statistically independent, exactly reproducible estimates.

    Args:
        clopper_pearson: use the exact binomial interval instead of the
            normal approximation (preferable when p_hat is near 0).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    caps = caps or Caps()
    enc = encode_model(model)
    outcome = np.empty(n_paths, dtype=np.int8)
    steps = np.empty(n_paths, dtype=np.int64)
    final = np.empty(n_paths, dtype=np.float64)
    _kernels.simulate_batch(
        *enc, x, n_paths, caps.max_steps, caps.resolve_cap(x), rng.fold_seed(seed), stream_offset,
        outcome, steps, final,
    )
    n_ruined = int(np.count_nonzero(outcome == _kernels.OUTCOME_RUINED))
    censored_cap = int(np.count_nonzero(outcome == _kernels.OUTCOME_HIT_CAP))
    censored_horizon = n_paths - n_ruined - censored_cap
    return _make_estimate(x, n_paths, n_ruined, censored_cap, censored_horizon, clopper_pearson)


def ruin_curve(
    model: RiskModel,
    xs: Sequence[float],
    n_paths: int,
    caps: Optional[Caps] = None,
    seed: int = 0,
    clopper_pearson: bool = False,
) -> List[RuinEstimate]:
    """Estimate psi on a grid, with disjoint stream ranges per grid point."""
    return [
        estimate_ruin(
            model, x, n_paths, caps, seed,
            stream_offset=i * n_paths, clopper_pearson=clopper_pearson,
        )
        for i, x in enumerate(xs)
    ]


def merge_estimates(a: RuinEstimate, b: RuinEstimate) -> RuinEstimate:
    """Pool two estimates at the same level (exact arithmetic on counts)."""
    if a.x != b.x:
        raise ValueError("can only merge estimates at the same start level")
    return _make_estimate(
        a.x,
        a.n_paths + b.n_paths,
        a.n_ruined + b.n_ruined,
        a.censored_cap + b.censored_cap,
        a.censored_horizon + b.censored_horizon,
        clopper_pearson=False,
    )


def decay_exponent_fit(curve: Sequence[RuinEstimate]) -> Tuple[float, float]:
    """Fit psi(x) ~ C (1+x)^(-rho): WLS slope of log p_hat vs log(1+x).

    Weights are the inverse squared relative CI widths, so precise points
    dominate.  Returns (rho_hat, stderr).

    Raises:
        ValueError: if no point observed ruin, or fewer than two did.
    """
    positive = [e for e in curve if e.p_hat > 0]
    if not positive:
        raise ValueError("no ruin observed")
    if len(positive) < 2:
        raise ValueError("need at least two grid points with observed ruin")
    lx = np.log1p([e.x for e in positive])
    lp = np.log([e.p_hat for e in positive])
    rel = np.array([e.rel_half_width for e in positive])
    rel = np.maximum(rel, 1e-12)  # p_hat = 1 has zero width; keep weights finite
    w = 1.0 / rel**2
    # polyfit squares its weights internally, so pass sqrt of the WLS weight.
    (slope, _intercept), cov = np.polyfit(lx, lp, 1, w=np.sqrt(w), cov=True)
    return float(-slope), float(math.sqrt(cov[0, 0]))


@dataclass(frozen=True)
class GammaLimitReport:
    """Diffusive-limit diagnostic for R_n^2 / n over surviving paths.

    For transient models the squared level, scaled by the step count,
    converges weakly to a Gamma law with mean ``2 mu + b`` and variance
    ``(2 mu + b) * 2 b``.
    """

    n_steps: int
    n_surviving: int
    empirical_mean: float
    empirical_variance: float
    reference_mean: float
    reference_variance: float
    quantile_probs: np.ndarray
    empirical_quantiles: np.ndarray
    reference_quantiles: np.ndarray


def gamma_limit_test(
    model: RiskModel,
    n: int,
    n_paths: int,
    seed: int = 0,
    stream_offset: int = 0,
) -> GammaLimitReport:
    """Run the chain ``n`` steps from x0=1 and compare R_n^2/n to its Gamma limit.

    Ruined paths are discarded; the limit law does not depend on the start
    level, and a low start maximizes mixing before the diffusive regime.

    Raises:
        ValueError: if the model is not transient (rho <= 0 or b = 0).
    """
    consts = derived_constants(model)
    if consts.rho is None or consts.rho <= 0:
        raise ValueError("gamma limit requires a transient inverse-rate model (rho > 0)")
    enc = encode_model(model)
    final = np.empty(n_paths, dtype=np.float64)
    ruined = np.empty(n_paths, dtype=np.bool_)
    _kernels.terminal_levels(
        *enc, 1.0, n, n_paths, rng.fold_seed(seed), stream_offset, final, ruined
    )
    surviving = final[~ruined]
    if surviving.size < 2:
        raise ValueError("not enough surviving paths for the gamma diagnostic")
    stat = surviving**2 / n
    mean_ref = 2.0 * consts.mu_drift + consts.b
    var_ref = mean_ref * 2.0 * consts.b
    shape = mean_ref / (2.0 * consts.b)
    scale = 2.0 * consts.b
    probs = np.arange(0.05, 0.951, 0.05)
    return GammaLimitReport(
        n_steps=n,
        n_surviving=int(surviving.size),
        empirical_mean=float(stat.mean()),
        empirical_variance=float(stat.var(ddof=1)),
        reference_mean=mean_ref,
        reference_variance=var_ref,
        quantile_probs=probs,
        empirical_quantiles=np.quantile(stat, probs),
        reference_quantiles=stats.gamma.ppf(probs, a=shape, scale=scale),
    )
