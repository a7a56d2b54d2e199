"""Deterministic 64-bit hashing and stream-seed derivation.

The hash embedder is pinned to FNV-1a-64 followed by SplitMix64 so that
stores are reproducible bit-for-bit across platforms and languages. The same
primitives derive independent sub-stream seeds (sampler, dropout, init) from
the single user-facing seed.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def fnv1a_64(data: bytes) -> int:
    """FNV-1a hash of a byte string, as an unsigned 64-bit integer."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


def splitmix64_mix(z: int) -> int:
    """SplitMix64 output function applied to one pre-advanced state."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix64_outputs(state: int, count: int) -> np.ndarray:
    """The first `count` SplitMix64 outputs for a generator seeded at `state`.

    Output j of the sequential generator is a pure function of
    state + (j+1) * gamma, which makes the whole block computable with
    vectorized uint64 arithmetic (wrapping is the intended semantics).
    """
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(state & MASK64) + idx * np.uint64(SPLITMIX_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def derive_seed(root: int, *parts: int) -> int:
    """Fold integer tags into a root seed, yielding an independent 64-bit seed.

    Used to fan one user seed out into named sub-streams; distinct tag
    sequences give unrelated seeds.
    """
    state = root & MASK64
    for part in parts:
        state = (state + SPLITMIX_GAMMA) & MASK64
        state = splitmix64_mix(state ^ (part & MASK64))
    return state


# Tags for the named sub-streams hanging off one user seed.
STREAM_INIT = 0x01
STREAM_SAMPLER = 0x02
STREAM_DROPOUT = 0x03
STREAM_EVAL = 0x04
