"""Counter-based random streams.

Every history owns a 64-bit state derived by hashing ``(seed, index)``; each
draw advances the counter by a Weyl increment and returns the SplitMix64
finaliser of it. Streams for different histories never interact, so results
do not depend on how histories are spread over workers.
"""
import numpy as np
from numba import njit, uint64

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53
_MASK64 = (1 << 64) - 1


@njit(cache=True, nogil=True)
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def stream_key(seed, index):
    """Initial state of the stream for history ``index`` under ``seed``."""
    k = _mix(uint64(seed) + _GAMMA)
    return _mix(k ^ (uint64(index) * _GAMMA + _M2))


@njit(cache=True, nogil=True)
def next_uniform(state, i):
    """Uniform double in [0, 1) from ``state[i]``, advancing it."""
    s = state[i] + _GAMMA
    state[i] = s
    return float(_mix(s) >> _S11) * _TO_UNIT


def make_stream(seed, index=0):
    """One-element state array usable with the sampling helpers."""
    return np.array([stream_key(np.uint64(int(seed) & _MASK64), np.uint64(int(index) & _MASK64))], dtype=np.uint64)


@njit(cache=True, nogil=True)
def uniforms(state, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = next_uniform(state, 0)
    return out
