"""Counter-based random streams.

Every random draw in a simulation is addressed by ``(seed, oracle, worker,
iteration)``.  The draw is produced by a Philox generator whose key holds the
seed and oracle tag and whose counter starts at ``(0, 0, worker, iteration)``,
so the numbers a worker sees never depend on the order in which workers (or
runs) are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseKey", "NoiseStreams", "generator", "XI_VALUE", "XI_JACOBIAN", "ZETA", "BATCH"]

# oracle tags
XI_VALUE = 1
XI_JACOBIAN = 2
ZETA = 3
BATCH = 4

NoiseKey = tuple[int, int, int]


def generator(key: NoiseKey, oracle: int) -> np.random.Generator:
    """Return the generator for one oracle call addressed by ``key = (seed, worker, iteration)``."""
    seed, worker, iteration = key
    bits = np.random.Philox(key=[seed, oracle], counter=[0, 0, worker, iteration])
    return np.random.Generator(bits)


@dataclass(frozen=True)
class NoiseStreams:
    """Maps (worker, iteration) to a :data:`NoiseKey`.

    With ``shared=True`` every worker reads the stream of worker 0, which is
    how the homogeneous-collapse experiments feed identical noise to all
    workers.
    """

    seed: int
    shared: bool = False

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    def key(self, worker: int, iteration: int) -> NoiseKey:
        return (int(self.seed), 0 if self.shared else int(worker), int(iteration))
