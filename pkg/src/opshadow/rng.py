"""Counter-based, splittable random streams.

Every consumer of randomness derives its own Philox generator from the
master seed plus a structured path (purpose tag, circuit index, ...), so any
record can be regenerated in isolation and parallel generation is race-free.
"""

from __future__ import annotations

import numpy as np

# purpose tags; append only, never renumber
TAG_CIRCUIT_TABLE = 1
TAG_SETTINGS = 2
TAG_INPUT_BITS = 3
TAG_OUTCOMES = 4
TAG_READOUT = 5
TAG_BOOTSTRAP = 6
TAG_CALIBRATION = 7


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Philox generator keyed by (master seed, *path)."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))
