"""Deterministic 64-bit generator used everywhere randomness is needed.

SplitMix64: state advances by the golden-gamma constant and each output is
a finalizer mix of the new state. Because output i depends only on
``seed + (i+1) * GAMMA``, a whole run of outputs can be produced as one
vectorized uint64 computation that is bit-identical to sequential calls.
The constants below are part of the on-disk contract: models, dataset
splits and synthetic images are reproducible byte-for-byte from a seed.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential generator; ``counter`` tracks how many outputs were drawn."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        state = (self.seed + self.counter * GAMMA) & _MASK
        return _mix(state)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is negligible for n << 2^64."""
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def floats(self, n: int) -> np.ndarray:
        """Next ``n`` outputs of :meth:`next_float` as one vectorized draw."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = (np.uint64(self.seed) + idx * np.uint64(GAMMA)) & np.uint64(_MASK)
            z = ((z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)) & np.uint64(_MASK)
            z = ((z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)) & np.uint64(_MASK)
            z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniforms(self, n: int, lo: float, hi: float) -> np.ndarray:
        return lo + (hi - lo) * self.floats(n)


def derive_seed(seed: int, *salts: int) -> int:
    """A stable sub-seed for one (seed, salt...) combination."""
    out = seed & _MASK
    for salt in salts:
        out = _mix((out + (salt + 1) * GAMMA) & _MASK)
    return out
