"""Seeded randomness helpers.

Everything random in this package flows from a single 64-bit seed through a
counter-based generator (Philox).  Each purpose (feature draws, quality draws,
partitions, batch sampling, probe vectors) gets its own named substream so that
consuming randomness in one place never shifts the draws seen by another.
"""

import hashlib

import numpy as np

_SEED_MAX = 2**64


def check_seed(seed):
    """Validate a master seed, returning it as a plain int."""
    seed = int(seed)
    if not 0 <= seed < _SEED_MAX:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed


def substream(seed, purpose):
    """Return an independent Generator for a named purpose under one seed.

    The purpose string is hashed into the seed material, so streams for
    different purposes are statistically independent while remaining fully
    reproducible from (seed, purpose).
    """
    seed = check_seed(seed)
    tag = int.from_bytes(hashlib.blake2b(purpose.encode(), digest_size=8).digest(), "big")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag])))
