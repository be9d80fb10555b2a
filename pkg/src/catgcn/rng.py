"""Named, splittable random streams.

Every stochastic choice in the package draws from a Philox4x32-10 counter-based
generator keyed by (seed, stream id, substream id). Philox is seedable and
splittable by construction, so any implementation that reproduces the key
derivation below reproduces splits, samples, inits, and dropout masks exactly.
"""

from __future__ import annotations

import numpy as np

# Stream ids. Substream meaning depends on the stream: node id for SAMPLE,
# epoch index for DROPOUT and RESAMPLE, zero elsewhere.
SPLIT = 1
SAMPLE = 2
XAVIER = 3
DROPOUT = 4
SYNTH = 5
RESAMPLE = 6

_MASK64 = (1 << 64) - 1


def stream_rng(seed: int, stream: int, substream: int = 0) -> np.random.Generator:
    """Generator for the (seed, stream, substream) Philox stream."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = [seed & _MASK64, ((stream << 48) | (substream & ((1 << 48) - 1))) & _MASK64]
    return np.random.Generator(np.random.Philox(key=key))


def derive_cell_seed(base_seed: int, cell_index: int) -> int:
    """Deterministic per-cell seed for grid search, from (base seed, cell index).

    Splitmix64 finalizer keeps cells statistically independent while remaining
    reproducible across platforms.
    """
    x = (cell_index + 1) * 0x9E3779B97F4A7C15 & _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    x ^= x >> 31
    return (base_seed ^ x) & ((1 << 62) - 1)
