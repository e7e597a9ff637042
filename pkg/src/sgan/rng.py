"""Portable pseudo-random numbers: xoshiro256++ seeded through splitmix64.

Every random draw in the package goes through :class:`Rng`, so a run is
reproducible bit-for-bit from its integer seed. Gaussian variates use the
Box-Muller transform on 53-bit uniforms.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_NEG53 = 1.0 / (1 << 53)


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step. Returns (new_state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


@numba.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def _fill(state, out):
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    for i in range(out.shape[0]):
        out[i] = _rotl(s0 + s3, 23) + s0
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


class Rng:
    """xoshiro256++ generator.

    The 256-bit state is filled from four successive splitmix64 outputs of
    the seed, the seeding procedure recommended by the generator's authors.
    """

    def __init__(self, seed: int = 0):
        if seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed}")
        x = seed & _MASK64
        words = []
        for _ in range(4):
            x, out = splitmix64(x)
            words.append(out)
        self._state = np.array(words, dtype=np.uint64)

    @classmethod
    def from_state(cls, words) -> "Rng":
        rng = cls.__new__(cls)
        rng._state = np.array([int(w) for w in words], dtype=np.uint64)
        if not rng._state.any():
            raise ValueError("xoshiro state must not be all zero")
        return rng

    @property
    def state(self) -> list[int]:
        return [int(w) for w in self._state]

    def copy(self) -> "Rng":
        return Rng.from_state(self.state)

    def next_u64(self, n: int = 1) -> np.ndarray:
        out = np.empty(n, dtype=np.uint64)
        _fill(self._state, out)
        return out

    def fork(self) -> "Rng":
        """Independent child stream seeded from the next output of this one."""
        return Rng(int(self.next_u64(1)[0]))

    def uniform(self, size) -> np.ndarray:
        """Doubles in [0, 1) with 53 bits of randomness."""
        n = int(np.prod(size, dtype=np.int64))
        bits = self.next_u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) * _TWO_NEG53).reshape(size)

    def normal(self, size) -> np.ndarray:
        n = int(np.prod(size, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        ang = 2.0 * math.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(ang)
        z[1::2] = r * np.sin(ang)
        return z[:n].reshape(size)

    def integers(self, k: int, size) -> np.ndarray:
        """Uniform integers in {0, ..., k-1}."""
        if k < 1:
            raise ValueError("k must be >= 1")
        idx = np.floor(self.uniform(size) * k).astype(np.int64)
        return np.minimum(idx, k - 1)

    def categorical(self, weights, size) -> np.ndarray:
        cdf = np.cumsum(np.asarray(weights, dtype=np.float64))
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, self.uniform(size), side="right")
        return np.minimum(idx, len(cdf) - 1)
