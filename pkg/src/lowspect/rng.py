"""Deterministic, platform-independent random numbers.

The generator is PCG32 (XSH-RR variant, 64-bit state / 32-bit output) with
the standard multiplier and the canonical two-step seeding routine.  All
randomness in the package flows through this generator so that phantoms,
noise realizations, dropout masks and shuffles reproduce bit-exactly across
platforms and backends.

Parallel or per-item work never shares a generator; child seeds are derived
with :func:`child_seed` (splitmix64 of the parent seed and a task index).
"""

from __future__ import annotations

import numpy as np

PCG_MULT = 6364136223846793005
DEFAULT_STREAM = 54  # initseq of the reference implementation's demo

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (finalizer only, no increment)."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def child_seed(parent_seed: int, index: int) -> int:
    """Derive an independent 64-bit seed for task ``index`` under a parent seed.

    This is the ``index``-th output of the splitmix64 stream seeded with
    ``parent_seed``, so distinct indices give statistically independent
    streams and the derivation is order-free.
    """
    if index < 0:
        raise ValueError("task index must be nonnegative")
    return splitmix64((parent_seed + (index + 1) * _SPLITMIX_GAMMA) & _MASK64)


class Rng:
    """PCG32 generator; single-owner, never shared between workers."""

    __slots__ = ("state", "inc", "seed", "stream")

    def __init__(self, seed: int, stream: int = DEFAULT_STREAM):
        self.seed = seed & _MASK64
        self.stream = stream & _MASK64
        self.state = 0
        self.inc = ((self.stream << 1) | 1) & _MASK64
        self.next_u32()
        self.state = (self.state + self.seed) & _MASK64
        self.next_u32()

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * PCG_MULT + self.inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def next_unit(self) -> float:
        """Uniform real in [0, 1) with 32 bits of resolution."""
        return self.next_u32() * 2.0**-32

    def next_below(self, bound: int) -> int:
        """Uniform integer in [0, bound) without modulo bias."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = (_MASK32 + 1) - ((_MASK32 + 1) % bound)
        while True:
            u = self.next_u32()
            if u < threshold:
                return u % bound

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_unit()

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self, index: int) -> "Rng":
        """Child generator for task ``index``, independent of this stream."""
        return Rng(child_seed(self.seed, index), self.stream)

    # Bulk draws route through the active kernel backend; the consumed
    # stream is identical to repeated next_u32() calls.

    def fill_u32(self, count: int) -> np.ndarray:
        from . import kernels

        state_arr = np.array([self.state, self.inc], dtype=np.uint64)
        out = kernels.pcg32_fill(state_arr, count)
        self.state = int(state_arr[0])
        return out

    def fill_unit(self, count: int) -> np.ndarray:
        return self.fill_u32(count).astype(np.float64) * 2.0**-32
