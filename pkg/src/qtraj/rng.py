"""Per-path random substreams.

Path ``j`` of a run with master seed ``s`` always draws from
``PCG64(SeedSequence(s, spawn_key=(stream, j)))``, so any subset of paths can
be regenerated independently and in any order.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

DISCRETE_STREAM = 0
SDE_STREAM = 1
AUX_STREAM = 2


def path_rng(master_seed: int, path_index: int, stream: int = DISCRETE_STREAM) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(path_index)))
    return np.random.Generator(np.random.PCG64(ss))


def aux_rng(master_seed: int, tag: int = 0) -> np.random.Generator:
    """Stream for harness-level randomness (state samples, bootstrap splits)."""
    return path_rng(master_seed, tag, AUX_STREAM)


def uniform_to_normal(u) -> np.ndarray:
    """Standard normals from uniforms on (0, 1) by the inverse normal CDF.

    One uniform per normal.  A uniform of exactly 0 (probability 2**-53) is
    nudged to the smallest positive double so the transform stays finite.
    """
    u = np.asarray(u, dtype=float)
    return ndtri(np.where(u > 0.0, u, np.finfo(float).tiny))
