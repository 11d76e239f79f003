"""Seed derivation for independent, reproducible random streams."""

import numpy as np


def derive_seed(seed, *keys):
    """Derive a 63-bit integer seed from a master seed and integer keys.

    Streams derived from distinct key tuples are statistically independent,
    and the derived value is a plain int so it can be stored in file headers.
    """
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def rng_for(seed, *keys):
    """Return a fresh ``numpy.random.Generator`` for ``(seed, *keys)``."""
    if keys:
        return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))
    return np.random.default_rng(int(seed))
