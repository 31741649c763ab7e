"""Counter-based random streams.

Every random draw in the forest engine is a pure function of a 64-bit key
and a counter, so results never depend on execution order or on how work
is split between threads.  Keys are derived by hashing a tuple
``(seed, tag, i, j)`` with the SplitMix64 finalizer; a stream is then the
SplitMix64 sequence started at that key.
"""

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# purpose tags
TAG_FOREST = 1
TAG_BOOTSTRAP = 2
TAG_SPLIT = 3
TAG_PERMUTE = 4
TAG_NESTED = 5
TAG_PREDICTION = 6
TAG_FORWARD = 7
TAG_EXHAUSTIVE = 8
TAG_IMPORTANCE = 9


@nb.njit(nogil=True, cache=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(nogil=True, cache=True)
def derive_key(key, a, b=0, c=0):
    """Hash ``key`` together with up to three nonnegative indices."""
    h = mix64(np.uint64(key) + GOLDEN)
    h = mix64(h ^ (np.uint64(a) + GOLDEN))
    h = mix64(h ^ (np.uint64(b) + GOLDEN))
    return mix64(h ^ (np.uint64(c) + GOLDEN))


@nb.njit(nogil=True, cache=True)
def draw_u64(key, counter):
    return mix64(np.uint64(key) + np.uint64(counter + 1) * GOLDEN)


@nb.njit(nogil=True, cache=True)
def draw_uniform(key, counter):
    """Uniform double in [0, 1) from the 53 high bits of one draw."""
    return float(draw_u64(key, counter) >> _S11) * _INV53


@nb.njit(nogil=True, cache=True)
def draw_index(key, counter, k):
    """Integer in ``range(k)``."""
    j = int(draw_uniform(key, counter) * k)
    return j if j < k else k - 1


def stream_key(seed, tag, i=0, j=0):
    """Key for the stream identified by ``(seed, tag, i, j)``.

    ``seed`` may be any integer; it is reduced modulo 2**64.
    """
    return int(derive_key(np.uint64(int(seed) % 2**64), tag, i, j))


def uniforms(key, size, start=0):
    """``size`` consecutive uniforms of stream ``key`` (for tests and tooling)."""
    return _uniforms(np.uint64(key), size, start)


@nb.njit(nogil=True, cache=True)
def _uniforms(key, size, start):
    out = np.empty(size)
    for i in range(size):
        out[i] = draw_uniform(key, start + i)
    return out
