"""
Seed derivation for reproducible trials.

Every stochastic operation in the harness takes an explicit
``numpy.random.Generator``. Trial generators are derived from the experiment
seed and the trial index, so changing the trial count never reshuffles
earlier trials.
"""

from typing import Optional

import numpy as np

SEED_MASK = (1 << 64) - 1


def trial_rng(seed: int, trial_index: int, stream: int = 0) -> np.random.Generator:
    """Generator for one trial, keyed by (seed, trial index, stream)."""
    sequence = np.random.SeedSequence(seed & SEED_MASK, spawn_key=(trial_index, stream))
    return np.random.default_rng(sequence)


def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    return np.random.default_rng(seed)


def child_rng(rng: np.random.Generator) -> np.random.Generator:
    """Split an independent generator off ``rng`` (consumes one draw)."""
    return np.random.default_rng(int(rng.integers(0, SEED_MASK, dtype=np.uint64)))


def random_bit(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2))
