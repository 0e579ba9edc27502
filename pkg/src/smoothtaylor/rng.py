"""Seeded random streams.

Every random draw in the package comes from a PCG64 generator keyed by a
user seed plus a tuple of integers naming the purpose of the stream, so
independent draws never share state and results do not depend on call
order or scheduling.
"""

import numpy as np

PRNG_ID = "numpy-PCG64-SeedSequence"

# stream purposes
ROOTS = 1
BASELINES = 2
PERTURB = 3


def stream(seed, *key):
    seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))
