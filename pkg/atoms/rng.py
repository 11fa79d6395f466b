"""
SplitMix64 random streams.

All synthetic data and initializations draw from this generator so the same
integer seed produces the same bits on every platform. Output i of a stream
seeded with s is mix(s + (i + 1) * GAMMA) mod 2**64, which lets whole blocks
be generated with vectorized uint64 arithmetic.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *labels: object) -> int:
    """Child seed for a named sub-stream (epoch, batch, purpose...)."""
    composite = ":".join([str(seed & MASK64), *(str(label) for label in labels)])
    digest = hashlib.sha256(composite.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SplitMix64:
    """Deterministic 64-bit generator with numpy block draws."""

    def __init__(self, seed: int) -> None:
        self._state = seed & MASK64

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self, count: int) -> np.ndarray:
        if count <= 0:
            return np.zeros(0, dtype=np.uint64)
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + steps * np.uint64(GAMMA)
            out = _mix(z)
        self._state = (self._state + count * GAMMA) & MASK64
        return out

    def uniform(self, shape: int | Sequence[int] = (), low: float = 0.0,
                high: float = 1.0) -> np.ndarray:
        """Float64 samples in [low, high) built from the top 53 bits."""
        dims = (shape,) if isinstance(shape, int) else tuple(shape)
        count = int(math.prod(dims))
        bits = self.next_u64(count) >> np.uint64(11)
        unit = bits.astype(np.float64) * (1.0 / (1 << 53))
        return (low + (high - low) * unit).reshape(dims)

    def normal(self, shape: int | Sequence[int] = (), std: float = 1.0) -> np.ndarray:
        """Box-Muller standard normals scaled by std."""
        dims = (shape,) if isinstance(shape, int) else tuple(shape)
        count = int(math.prod(dims))
        u1 = self.uniform(count)
        u2 = self.uniform(count)
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        return (std * radius * np.cos(2.0 * np.pi * u2)).reshape(dims)

    def integers(self, high: int, shape: int | Sequence[int] = ()) -> np.ndarray:
        """Integers in [0, high)."""
        if high <= 0:
            raise ValueError("high must be positive")
        return np.floor(self.uniform(shape) * high).astype(np.int64)

    def choice(self, pool: int, k: int) -> np.ndarray:
        """k distinct indices from range(pool), in draw order."""
        if not 0 <= k <= pool:
            raise ValueError(f"cannot draw {k} distinct items from {pool}")
        keys = self.uniform(pool)
        return np.argsort(keys, kind="stable")[:k]

    def spawn(self, *labels: object) -> SplitMix64:
        return SplitMix64(derive_seed(self._state, *labels))
