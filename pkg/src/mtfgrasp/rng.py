"""Portable seeded randomness.

All shuffles and weight initialisation go through SplitMix64 so that a
given seed produces the same stream in any language:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

(all arithmetic mod 2**64). Floats use the top 53 bits, bounded integers
use rejection sampling, and shuffles are Fisher-Yates from the last index
down. Sub-seeds are derived by folding integer keys through the mixer.
"""

from __future__ import annotations

from collections.abc import MutableSequence
from typing import Any

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(*keys: int) -> int:
    """Fold integer keys into one 64-bit seed; order matters."""
    s = 0
    for k in keys:
        s = mix64((s + GOLDEN + (int(k) & MASK64)) & MASK64)
    return s


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        # reject the top partial bucket so every residue is equally likely
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, seq: MutableSequence[Any] | np.ndarray) -> None:
        for i in range(len(seq) - 1, 0, -1):
            k = self.randbelow(i + 1)
            seq[i], seq[k] = seq[k], seq[i]

    def permutation(self, n: int) -> np.ndarray:
        idx = list(range(n))
        self.shuffle(idx)
        return np.asarray(idx, dtype=np.int64)
