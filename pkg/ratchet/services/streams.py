import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Seeded, portable 64-bit stream (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))


def replica_seed(base_seed: int, replica: int) -> int:
    return base_seed + replica
