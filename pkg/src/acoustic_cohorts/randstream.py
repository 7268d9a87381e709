"""Deterministic randomness utilities.

Two kinds of randomness are used in the pipeline and both must be exactly
reproducible regardless of chunking or worker count:

* seeded generators for sequential draws (k-means++ selection, synthesis),
  derived from integer seed tuples via `SeedSequence`;
* a stateless counter-based uniform stream for per-index decisions
  (unknown masking), where the value at index i depends only on
  (seed, i) and never on how many values were drawn before it.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64


def derive_seed(*parts: int) -> int:
    """Collapse a tuple of integers into one well-mixed 64-bit seed."""
    entropy = [int(p) % 2**64 for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def rng_from(*parts: int) -> np.random.Generator:
    """Seeded generator whose stream depends only on the given integers."""
    entropy = [int(p) % 2**64 for p in parts]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 array ops wrap mod 2**64 by design
    z = z + _U64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


def uniform_at(seed: int, start: int, count: int) -> np.ndarray:
    """Counter-based uniforms in [0, 1) for indices start..start+count-1.

    Stateless: any chunking of the index range reproduces the same values,
    so parallel emission cannot change a decision.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    idx = np.arange(start, start + count, dtype=np.uint64)
    keyed = np.full(count, int(seed) % 2**64, dtype=np.uint64)
    bits = _mix64(_mix64(keyed) ^ idx)
    # top 53 bits -> float64 in [0, 1), same resolution as Generator.random
    return (bits >> _U64(11)).astype(np.float64) * 2.0**-53
