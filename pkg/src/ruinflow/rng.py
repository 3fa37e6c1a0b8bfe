"""Counter-based random number streams for reproducible parallel sampling.

Every variate drawn by the simulation engine is a pure function of
``(seed, stream_id, draw_counter)``.  Streams are cheap to construct (no
jump-ahead tables), independent of scheduling, and identical across thread
counts and platforms, which makes large parallel Monte Carlo runs
byte-for-byte reproducible.

The generator is a SplitMix64-style Weyl sequence: the stream state advances
by a fixed odd constant per draw and the output is a strong 64-bit finalizer
of the state.  Distribution samplers (exponential, gamma, Pareto-type,
deterministic) are provided as ``@njit`` kernels so they can be inlined into
the hot simulation loops.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = [
    "EXPONENTIAL",
    "GAMMA",
    "PARETO",
    "DETERMINISTIC",
    "fold_seed",
    "stream_state",
    "next_uint64",
    "next_unit",
    "next_normal",
    "next_variate",
]

# Distribution codes shared with the compiled kernels.
EXPONENTIAL = 0
GAMMA = 1
PARETO = 2
DETERMINISTIC = 3

_U64 = np.uint64
_WEYL = _U64(0x9E3779B97F4A7C15)
_MIX_A = _U64(0xBF58476D1CE4E5B9)
_MIX_B = _U64(0x94D049BB133111EB)
# 2**-53, applied to the top 53 bits of the mixed state.
_INV_2_53 = 1.0 / 9007199254740992.0


def fold_seed(seed: int) -> int:
    """Map an unsigned 64-bit seed onto the signed range, preserving its bits.

    Compiled entry points type plain Python integers as int64, which raises
    at the call boundary for seeds at or above 2**63; the two's-complement
    fold keeps the exact bit pattern, and the kernels reinterpret it as
    unsigned.
    """
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed - 2**64 if seed >= 2**63 else seed


@njit(cache=True)
def _mix64(z):
    """SplitMix64 finalizer: bijective avalanche mix of a 64-bit word."""
    z = (z ^ (z >> _U64(30))) * _MIX_A
    z = (z ^ (z >> _U64(27))) * _MIX_B
    return z ^ (z >> _U64(31))


@njit(cache=True)
def stream_state(seed, stream_id):
    """Initial state of stream ``stream_id`` under master ``seed``.

    Seed and stream index are scrambled through the finalizer before
    entering the Weyl sequence so that neighbouring stream ids (the common
    case: one stream per path) start at decorrelated states.
    """
    return _mix64(_mix64(_U64(seed) + _WEYL) + _U64(stream_id) * _MIX_A)


@njit(cache=True)
def next_uint64(state):
    """Advance ``state`` one step; return ``(state, uniform 64-bit word)``."""
    state = state + _WEYL
    return state, _mix64(state)


@njit(cache=True)
def next_unit(state):
    """Uniform draw on the open interval (0, 1)."""
    state, z = next_uint64(state)
    return state, (np.float64(z >> _U64(11)) + 0.5) * _INV_2_53


@njit(cache=True)
def next_normal(state):
    """Standard normal draw (Box-Muller; consumes exactly two uniforms)."""
    state, u1 = next_unit(state)
    state, u2 = next_unit(state)
    return state, math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True)
def next_variate(code, p0, p1, state):
    """Draw from the distribution family ``code``.

    Parameter layout:
        EXPONENTIAL:   p0 = rate
        GAMMA:         p0 = shape, p1 = rate
        PARETO:        p0 = tail exponent (2 + beta), p1 = scale;
                       survival P{X > x} = (1 + x/scale)^(-p0)
        DETERMINISTIC: p0 = value (consumes no randomness)
    """
    if code == EXPONENTIAL:
        state, u = next_unit(state)
        return state, -math.log(u) / p0
    if code == PARETO:
        state, u = next_unit(state)
        return state, p1 * (u ** (-1.0 / p0) - 1.0)
    if code == GAMMA:
        # Marsaglia-Tsang squeeze; shapes below one use the boost trick.
        shape = p0
        boost = 1.0
        if shape < 1.0:
            state, u = next_unit(state)
            boost = u ** (1.0 / shape)
            shape += 1.0
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            state, z = next_normal(state)
            v = 1.0 + c * z
            if v <= 0.0:
                continue
            v = v * v * v
            state, u = next_unit(state)
            if math.log(u) < 0.5 * z * z + d - d * v + d * math.log(v):
                return state, boost * d * v / p1
    # DETERMINISTIC
    return state, p0
