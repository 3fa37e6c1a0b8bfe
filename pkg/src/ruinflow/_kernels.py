"""Compiled (numba) kernels: deterministic flow, jump sampling, path loops.

These functions form the hot inner loops of the Monte Carlo engine.  They
take the risk model in a flattened encoding (rate kind code + parameter
array, distribution codes + parameters) produced by
:func:`ruinflow.chain.encode_model` so that a single compiled kernel serves
every model family.

All batch kernels parallelize over paths/draws with one RNG stream per
path and write results into per-path output slots only; totals computed
from those arrays are identical for any thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .rng import (
    DETERMINISTIC,
    EXPONENTIAL,
    GAMMA,
    PARETO,
    next_unit,
    next_variate,
    stream_state,
)

# Rate kind codes (mirrors ruinflow.models).
RATE_CONSTANT = 0
RATE_INVERSE = 1
RATE_POWER = 2
RATE_TABULATED = 3

# Path outcome codes.
OUTCOME_RUINED = 0
OUTCOME_HIT_CAP = 1
OUTCOME_HORIZON = 2


# ---------------------------------------------------------------------------
# Deterministic flow between claims
# ---------------------------------------------------------------------------

@njit(cache=True)
def rate_at(kind, rp, tab_levels, tab_rates, z):
    """Premium rate v(z) for the flattened rate encoding."""
    if kind == RATE_CONSTANT:
        return rp[0]
    if kind == RATE_INVERSE:
        zz = z if z > rp[2] else rp[2]
        return rp[0] + rp[1] / zz
    if kind == RATE_POWER:
        zz = z if z > rp[3] else rp[3]
        return rp[0] + rp[1] / zz ** rp[2]
    # RATE_TABULATED: piecewise-constant lookup.
    out = tab_rates[0]
    for i in range(tab_levels.shape[0]):
        if z >= tab_levels[i]:
            out = tab_rates[i]
        else:
            break
    return out


@njit(cache=True)
def _flow_inverse_analytic(v_c, theta, z_min, x, t):
    """Flow for v(z) = v_c + theta/max(z, z_min), exact up to Newton tolerance.

    Above the floor the trajectory satisfies the separable implicit equation
    G(V) = G(x) + t with G(z) = z/v_c - (theta/v_c^2) log(v_c z + theta),
    whose derivative is exactly 1/v(z).  Newton iterations are clamped to
    the bracket [x + v_c t, x + v(x) t].
    """
    if x < z_min:
        v0 = v_c + theta / z_min
        t_floor = (z_min - x) / v0
        if t <= t_floor:
            return x + v0 * t
        x = z_min
        t = t - t_floor
    if t <= 0.0:
        return x
    c1 = 1.0 / v_c
    c2 = theta / (v_c * v_c)
    target = x * c1 - c2 * math.log(v_c * x + theta) + t
    lo = x + v_c * t
    hi = x + (v_c + theta / x) * t
    v_est = v_c + theta / (0.5 * (lo + hi))
    V = x + v_est * t
    for _ in range(60):
        g = V * c1 - c2 * math.log(v_c * V + theta)
        dv = (target - g) * (v_c + theta / V)
        V = V + dv
        if V < lo:
            V = lo
        elif V > hi:
            V = hi
        if abs(dv) <= 1e-13 * V:
            break
    return V


@njit(cache=True)
def _rk4_step(kind, rp, tab_levels, tab_rates, z, h):
    k1 = rate_at(kind, rp, tab_levels, tab_rates, z)
    k2 = rate_at(kind, rp, tab_levels, tab_rates, z + 0.5 * h * k1)
    k3 = rate_at(kind, rp, tab_levels, tab_rates, z + 0.5 * h * k2)
    k4 = rate_at(kind, rp, tab_levels, tab_rates, z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def flow_rk4(kind, rp, tab_levels, tab_rates, x, t, h_max, rel_tol):
    """Adaptive RK4 flow with step-doubling error control.

    The local error of a full step is estimated against two half steps; the
    per-step budget is proportional to the accumulated increment so the
    total error stays below ``rel_tol * (V - x)`` plus a 1e-12 floor.
    """
    if t <= 0.0:
        return x
    z = x
    remaining = t
    h = h_max if h_max < t else t
    while remaining > 1e-300:
        if h > remaining:
            h = remaining
        full = _rk4_step(kind, rp, tab_levels, tab_rates, z, h)
        half = _rk4_step(kind, rp, tab_levels, tab_rates, z, 0.5 * h)
        double = _rk4_step(kind, rp, tab_levels, tab_rates, half, 0.5 * h)
        err = abs(double - full) / 15.0
        inc = double - x
        budget = (rel_tol * (inc if inc > 0.0 else 0.0) + 1e-12) * (h / t)
        if err <= budget or h <= 1e-12 * t:
            z = double + (double - full) / 15.0  # Richardson extrapolation
            remaining -= h
            if err < 0.1 * budget:
                h *= 2.0
        else:
            h *= 0.5
    return z


@njit(cache=True)
def _flow_tabulated(tab_levels, tab_rates, x, t):
    """Exact flow for piecewise-constant rates via event stepping."""
    z = x
    remaining = t
    n = tab_levels.shape[0]
    while remaining > 0.0:
        # Segment index: greatest breakpoint level <= z (or 0 below).
        seg = 0
        for i in range(n):
            if z >= tab_levels[i]:
                seg = i
            else:
                break
        v = tab_rates[seg]
        if v <= 0.0:
            return z
        # Next breakpoint strictly above z, if any.
        nxt = -1.0
        for i in range(seg, n):
            if tab_levels[i] > z:
                nxt = tab_levels[i]
                break
        if nxt < 0.0:
            return z + v * remaining
        dt = (nxt - z) / v
        if dt >= remaining:
            return z + v * remaining
        z = nxt
        remaining -= dt
    return z


@njit(cache=True)
def flow_value(kind, rp, tab_levels, tab_rates, x, t):
    """Reserve level after premium inflow for time ``t`` from level ``x``.

    Constant, inverse, and tabulated rates use exact formulas; the power
    family uses fixed-substep RK4 sized for per-jump accuracy far beyond
    the Monte Carlo noise floor.
    """
    if t <= 0.0:
        return x
    if kind == RATE_CONSTANT:
        return x + rp[0] * t
    if kind == RATE_INVERSE:
        return _flow_inverse_analytic(rp[0], rp[1], rp[2], x, t)
    if kind == RATE_TABULATED:
        return _flow_tabulated(tab_levels, tab_rates, x, t)
    # RATE_POWER: the rate varies on the scale of the level itself, so a
    # substep proportional to x keeps the local error negligible.
    h = 0.1 * (x + 1.0)
    n_sub = int(t / h) + 1
    h = t / n_sub
    z = x
    for _ in range(n_sub):
        z = _rk4_step(kind, rp, tab_levels, tab_rates, z, h)
    return z


# ---------------------------------------------------------------------------
# Jump sampling
# ---------------------------------------------------------------------------

@njit(cache=True)
def draw_jump(kind, rp, tab_levels, tab_rates,
              xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
              x, state):
    """One embedded-chain jump V_x(tau) - x - xi; returns (state, jump, tau, xi)."""
    state, tau = next_variate(tau_code, tau_p0, tau_p1, state)
    v = flow_value(kind, rp, tab_levels, tab_rates, x, tau)
    state, xi = next_variate(xi_code, xi_p0, xi_p1, state)
    return state, v - x - xi, tau, xi


@njit(parallel=True, cache=True)
def sample_jumps(kind, rp, tab_levels, tab_rates,
                 xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                 x, n_draws, seed, stream0,
                 out_jump, out_tau, out_xi):
    """Independent jump draws at a fixed level, one stream per draw."""
    for i in prange(n_draws):
        state = stream_state(seed, stream0 + i)
        state, j, tau, xi = draw_jump(
            kind, rp, tab_levels, tab_rates,
            xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1, x, state)
        out_jump[i] = j
        out_tau[i] = tau
        out_xi[i] = xi


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------

@njit(parallel=True, cache=True)
def simulate_batch(kind, rp, tab_levels, tab_rates,
                   xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                   x0, n_paths, max_steps, level_cap, seed, stream0,
                   out_outcome, out_steps, out_final):
    """Simulate ``n_paths`` embedded-chain paths in streaming mode.

    Path ``i`` uses RNG stream ``stream0 + i``; outputs are per-path, so
    aggregate counts are independent of the thread count.
    """
    for i in prange(n_paths):
        state = stream_state(seed, stream0 + i)
        x = x0
        outcome = OUTCOME_HORIZON
        steps = max_steps
        if x > level_cap:
            outcome = OUTCOME_HIT_CAP
            steps = 0
        else:
            for n in range(max_steps):
                state, j, tau, xi = draw_jump(
                    kind, rp, tab_levels, tab_rates,
                    xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1, x, state)
                x = x + j
                if x < 0.0:
                    outcome = OUTCOME_RUINED
                    steps = n + 1
                    break
                if x > level_cap:
                    outcome = OUTCOME_HIT_CAP
                    steps = n + 1
                    break
        out_outcome[i] = outcome
        out_steps[i] = steps
        out_final[i] = x


@njit(cache=True)
def simulate_recorded(kind, rp, tab_levels, tab_rates,
                      xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                      x0, max_steps, level_cap, seed, stream_id, states_buf):
    """Single path with every state recorded; returns (outcome, n_states)."""
    state = stream_state(seed, stream_id)
    x = x0
    states_buf[0] = x
    n_states = 1
    if x > level_cap:
        return OUTCOME_HIT_CAP, n_states
    outcome = OUTCOME_HORIZON
    for _ in range(max_steps):
        state, j, tau, xi = draw_jump(
            kind, rp, tab_levels, tab_rates,
            xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1, x, state)
        x = x + j
        states_buf[n_states] = x
        n_states += 1
        if x < 0.0:
            outcome = OUTCOME_RUINED
            break
        if x > level_cap:
            outcome = OUTCOME_HIT_CAP
            break
    return outcome, n_states


@njit(parallel=True, cache=True)
def terminal_levels(kind, rp, tab_levels, tab_rates,
                    xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                    x0, n_steps, n_paths, seed, stream0,
                    out_final, out_ruined):
    """Level after exactly ``n_steps`` jumps (diffusive-limit diagnostic)."""
    for i in prange(n_paths):
        state = stream_state(seed, stream0 + i)
        x = x0
        ruined = False
        for _ in range(n_steps):
            state, j, tau, xi = draw_jump(
                kind, rp, tab_levels, tab_rates,
                xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1, x, state)
            x = x + j
            if x < 0.0:
                ruined = True
                break
        out_final[i] = x
        out_ruined[i] = ruined


# ---------------------------------------------------------------------------
# Heavy-tail helpers
# ---------------------------------------------------------------------------

@njit(cache=True)
def claim_tail(code, p0, p1, y):
    """Survival function of the claim-size family inside kernels.

    Gamma has no elementary survival function; callers fall back to the
    Python-level empirical estimator for that family.
    """
    if y <= 0.0:
        return 1.0
    if code == EXPONENTIAL:
        return math.exp(-p0 * y)
    if code == PARETO:
        return (1.0 + y / p1) ** (-p0)
    if code == DETERMINISTIC:
        return 1.0 if y < p0 else 0.0
    return -1.0


@njit(parallel=True, cache=True)
def conditional_left_tail(kind, rp, tab_levels, tab_rates,
                          xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                          x, y, n_draws, seed, stream0, out):
    """Conditional estimator of P{jump at level x < -y}.

    Integrates the claim tail over the inter-claim time:
    P{V_x(tau) - x - xi < -y} = E_tau[ P{xi > y + V_x(tau) - x} ].
    Averaging the exact claim tail over tau draws removes the claim-size
    sampling noise, which matters when the target probability is tiny.
    """
    for i in prange(n_draws):
        state = stream_state(seed, stream0 + i)
        state, tau = next_variate(tau_code, tau_p0, tau_p1, state)
        inc = flow_value(kind, rp, tab_levels, tab_rates, x, tau) - x
        out[i] = claim_tail(xi_code, xi_p0, xi_p1, y + inc)


@njit(cache=True)
def _draw_jump_truncated(kind, rp, tab_levels, tab_rates,
                         xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                         x, state):
    """Jump conditioned on staying above -x/2, by rejection."""
    while True:
        state, j, tau, xi = draw_jump(
            kind, rp, tab_levels, tab_rates,
            xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1, x, state)
        if j >= -0.5 * x:
            return state, j


@njit(parallel=True, cache=True)
def sample_jumps_truncated(kind, rp, tab_levels, tab_rates,
                           xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                           x, n_draws, seed, stream0, out_jump):
    for i in prange(n_draws):
        state = stream_state(seed, stream0 + i)
        state, j = _draw_jump_truncated(
            kind, rp, tab_levels, tab_rates,
            xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1, x, state)
        out_jump[i] = j


@njit(parallel=True, cache=True)
def simulate_truncated(kind, rp, tab_levels, tab_rates,
                       xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                       x0, n_paths, max_steps, level_cap, seed, stream0,
                       y_grid, occupancy, out_outcome, out_steps):
    """Truncated-jump chain with per-path occupation counts on ``y_grid``.

    ``occupancy[i, k]`` counts visits of path ``i`` to levels in
    ``(y_grid[k-1], y_grid[k]]`` (first bin: ``(0, y_grid[0]]``); the state
    before each jump is binned.  Summing over paths and cumulating over bins
    yields the expected-visits measure of ``(0, y]``.
    """
    n_grid = y_grid.shape[0]
    for i in prange(n_paths):
        state = stream_state(seed, stream0 + i)
        x = x0
        outcome = OUTCOME_HORIZON
        steps = max_steps
        for n in range(max_steps):
            k = np.searchsorted(y_grid, x)
            if k < n_grid:
                occupancy[i, k] += 1
            state, j = _draw_jump_truncated(
                kind, rp, tab_levels, tab_rates,
                xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1, x, state)
            x = x + j
            if x < 0.0:
                outcome = OUTCOME_RUINED
                steps = n + 1
                break
            if x > level_cap:
                outcome = OUTCOME_HIT_CAP
                steps = n + 1
                break
        out_outcome[i] = outcome
        out_steps[i] = steps


@njit(parallel=True, cache=True)
def confinement_probe(kind, rp, tab_levels, tab_rates,
                      xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1,
                      x0, n_steps, n_paths, seed, stream0, out_confined):
    """Fraction of paths staying inside [x0/2, 2 x0] for ``n_steps`` jumps."""
    lo = 0.5 * x0
    hi = 2.0 * x0
    for i in prange(n_paths):
        state = stream_state(seed, stream0 + i)
        x = x0
        confined = True
        for _ in range(n_steps):
            state, j, tau, xi = draw_jump(
                kind, rp, tab_levels, tab_rates,
                xi_code, xi_p0, xi_p1, tau_code, tau_p0, tau_p1, x, state)
            x = x + j
            if x < lo or x > hi:
                confined = False
                break
        out_confined[i] = confined
