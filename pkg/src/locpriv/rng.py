"""Reproducible random streams.

Every random draw in the package comes from a NumPy ``PCG64`` generator
seeded by ``SeedSequence(master_seed, spawn_key=(index, stream))``.  The
``index`` is a trial (or user) number, ``stream`` says what the draws are
for.  Swapping the mechanism therefore never perturbs sampled trajectories,
and every estimator sees the same trials for a given master seed.
"""

from __future__ import annotations

import numpy as np

GENERATOR = "numpy.PCG64 via SeedSequence(master, spawn_key=(index, stream))"

TRAJECTORY_STREAM = 0
NOISE_STREAM = 1
SCHEDULE_STREAM = 2


def derive(master_seed: int, index: int, stream: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(index), int(stream)))
    return np.random.Generator(np.random.PCG64(seq))


def uniforms(master_seed: int, n: int, size: int, stream: int, start: int = 0) -> np.ndarray:
    """Row ``i`` holds ``size`` U(0,1) draws from stream ``(start + i, stream)``."""
    out = np.empty((n, size))
    for i in range(n):
        out[i] = derive(master_seed, start + i, stream).random(size)
    return out


def normals(master_seed: int, n: int, size: int, stream: int, start: int = 0) -> np.ndarray:
    out = np.empty((n, size))
    for i in range(n):
        out[i] = derive(master_seed, start + i, stream).standard_normal(size)
    return out
