"""Deterministic per-trace seeds.

Each trace seed is derived from the master seed and a key tuple
(dataset index, trace index, ...) with :class:`numpy.random.SeedSequence`
spawn keys, so adding traces never changes the seeds of existing ones.
"""

import numpy as np


def derive_seed(master, *key):
    """64-bit seed for the stream identified by ``key`` under ``master``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def trace_seeds(master, dataset, count):
    return [derive_seed(master, dataset, i) for i in range(count)]


def generator(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))
