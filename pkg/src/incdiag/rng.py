"""Deterministic random-stream derivation.

Every source of randomness in the package is an explicit numpy Generator
derived from a master seed and a structured key, so results never depend on
call order or thread scheduling.
"""

import numpy as np

# Stream tags; keep values stable, they are part of run reproducibility.
STREAM_SPLIT = 1
STREAM_TRAIN = 2
STREAM_SELECT = 3
STREAM_FOREST = 4
STREAM_FCC = 5
STREAM_ENCODER = 6
STREAM_DATA = 7
STREAM_HEAD = 8


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Return an independent Generator for (master_seed, key...)."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


def derive_seed(master_seed: int, *key: int) -> int:
    """Return a stable 64-bit sub-seed for code that takes plain integer seeds."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])
