"""Counter-based deterministic random streams.

Every stochastic step in the toolkit (parameter init, dataset noise, PGD
starts, corruption sampling) draws from a named stream keyed by
(seed, name).  Values are pure functions of (key, counter) via splitmix64,
so results are byte-identical across platforms and numpy versions and a
stream can be re-opened anywhere without carrying generator state around.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z + _GOLDEN) & np.uint64(0xFFFFFFFFFFFFFFFF)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _fnv1a(text: str) -> np.uint64:
    h = _FNV_OFFSET
    with np.errstate(over="ignore"):
        for byte in text.encode("utf-8"):
            h = (h ^ np.uint64(byte)) * _FNV_PRIME
    return h


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed (for per-example sub-streams)."""
    h = np.atleast_1d(np.uint64(0))
    with np.errstate(over="ignore"):
        for p in parts:
            h = _splitmix64(h ^ np.uint64(int(p) & 0xFFFFFFFFFFFFFFFF))
    return int(h[0])


class Stream:
    """Deterministic stream of doubles derived from (seed, name).

    The i-th raw draw is splitmix64(key + (i+1)*GOLDEN); uniforms take the
    top 53 bits.  Consuming n values advances an internal cursor, so repeated
    calls continue the sequence; a fresh Stream(seed, name) restarts it.
    """

    def __init__(self, seed: int, name: str):
        seed64 = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._key = _splitmix64(_splitmix64(np.atleast_1d(seed64)) ^ _fnv1a(name))[0]
        self._cursor = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._cursor + 1, self._cursor + n + 1, dtype=np.uint64)
        self._cursor += n
        with np.errstate(over="ignore"):
            return _splitmix64(self._key + idx * _GOLDEN)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """n doubles uniform in [low, high), from 53-bit mantissas."""
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        return low + (high - low) * u

    def normal(self, n: int, sigma: float = 1.0) -> np.ndarray:
        """n N(0, sigma^2) draws via Box-Muller on consecutive pairs."""
        m = (n + 1) // 2
        # u1 in (0, 1] so log() is finite
        u1 = ((self._raw(m) >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0**-53)
        u2 = (self._raw(m) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return sigma * out[:n]

    def below(self, bound: int) -> int:
        """One integer uniform in [0, bound)."""
        return int(self.uniform(1)[0] * bound)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
