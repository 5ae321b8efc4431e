"""
Seeded random streams.

Every random quantity in PnPKit comes from numpy's PCG64 generator (the
permuted congruential generator with 128-bit state and 64-bit output), seeded
through a SeedSequence built from the user seed and a fixed stream number.
PCG64 output is identical across platforms for a given seed, so traces are
reproducible anywhere numpy runs.
"""

import numpy as np

SEED_LIMIT = 2**64

# Stream numbers are part of the reproducibility contract; never renumber.
STREAMS = {
    "matrix": 1,
    "phantom": 2,
    "noise": 3,
    "sampler": 4,
    "probe": 5,
    "power": 6,
}


def check_seed(seed: int) -> int:
    """Validate that seed is an unsigned 64-bit integer and return it."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < SEED_LIMIT:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed


def make_rng(seed: int, stream: str) -> np.random.Generator:
    """Return a PCG64 generator for the named stream of a seed."""
    if stream not in STREAMS:
        raise KeyError(f"unknown random stream: {stream}")
    sequence = np.random.SeedSequence([check_seed(seed), STREAMS[stream]])
    return np.random.Generator(np.random.PCG64(sequence))
