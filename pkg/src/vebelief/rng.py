"""Deterministic, splittable random streams.

A stream is identified by ``(master_seed, *key)``.  numpy's ``SeedSequence``
hashes the master seed as entropy and the key as its spawn key, and the
resulting state seeds a PCG64 generator.  Distinct keys give statistically
independent streams, and a stream never depends on which other streams were
created or in what order, so replications can run in any order or in
parallel and still reproduce bit-for-bit.
"""

import numpy as np

MAX_SEED = 2**64 - 1

# first key component, keeps sampling and bootstrap streams disjoint
SAMPLING_DOMAIN = 0
BOOTSTRAP_DOMAIN = 1


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(master_seed, *key):
    """Generator for the stream ``(master_seed, *key)``."""
    ss = np.random.SeedSequence(check_seed(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
