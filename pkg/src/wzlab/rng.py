"""Per-replicate random streams.

Each Monte Carlo replicate gets its own Philox (counter-based) generator keyed
by ``(master_seed, replicate, stream)`` through ``SeedSequence`` spawn keys, so
results do not depend on how replicates are split across workers.
"""

from __future__ import annotations

import numpy as np

# stream ids
COUPLED = 0
INDEPENDENT = 1


def replicate_rng(seed: int, replicate: int, stream: int = COUPLED) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replicate), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def batch_normals(seed: int, replicates, shape: tuple[int, ...],
                  stream: int = COUPLED) -> np.ndarray:
    """Standard normals of ``shape`` for each replicate index, stacked on axis 0."""
    replicates = list(replicates)
    out = np.empty((len(replicates),) + tuple(shape))
    for row, r in enumerate(replicates):
        out[row] = replicate_rng(seed, r, stream).standard_normal(shape)
    return out
