"""Deterministic, portable random number generation.

splitmix64 seeds xoshiro256++ (Blackman & Vigna, public domain); normals
come from Box-Muller. Everything is plain 64-bit integer arithmetic so the
same (seed, draw order) yields the same bits on every platform, which is
what makes generated datasets and trained toy ensembles reproducible.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_DOUBLE_SCALE = 2.0 ** -53


def _splitmix64_mix(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """64-bit state stepper; used only to expand seeds."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _splitmix64_mix(self._state)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, name: str) -> int:
    """Name a substream: one top-level seed fans out to independent streams."""
    h = _fnv1a64(name.encode("utf-8"))
    return _splitmix64_mix((seed & _MASK64) ^ _splitmix64_mix(h))


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256pp:
    """xoshiro256++ with splitmix64 seeding; sequential, single-stream."""

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        self._s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()]
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def next_double(self) -> float:
        # top 53 bits -> [0, 1)
        return (self.next_u64() >> 11) * _DOUBLE_SCALE

    def next_open_double(self) -> float:
        # (0, 1]; safe as a log() argument
        return ((self.next_u64() >> 11) + 1) * _DOUBLE_SCALE

    def next_uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_double()

    def next_below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < threshold:
                return u % n

    def next_normal(self) -> float:
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = self.next_open_double()
        u2 = self.next_double()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.next_normal() for _ in range(n)], dtype=np.float64)

    def doubles(self, n: int) -> np.ndarray:
        return np.array([self.next_double() for _ in range(n)], dtype=np.float64)

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates, high index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]


def substream(seed: int, name: str) -> Xoshiro256pp:
    return Xoshiro256pp(derive_seed(seed, name))
