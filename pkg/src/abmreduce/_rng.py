"""Seed-derivation helpers for the numpy-side randomness.

Simulation kernels use their own splittable streams (see _kernels); numpy
consumers derive independent generators from a master seed plus an integer
key path, so identical configurations reproduce bitwise regardless of how
work is scheduled.
"""

from __future__ import annotations

import numpy as np


def spawn_rng(master_seed, *key):
    """Independent Generator for (master_seed, key...)."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    entropy.extend(int(k) & 0xFFFFFFFFFFFFFFFF for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def subseed(master_seed, *key):
    """64-bit integer seed for kernels, derived from (master_seed, key...)."""
    ss = np.random.SeedSequence(
        [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
        + [int(k) & 0xFFFFFFFFFFFFFFFF for k in key])
    return int(ss.generate_state(1, np.uint64)[0])
