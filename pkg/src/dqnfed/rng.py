"""Counter-based random streams derived from a single master seed.

Every consumer of randomness asks for a stream keyed by
``(master_seed, purpose, *counters)``.  Streams are Philox generators seeded
through :class:`numpy.random.SeedSequence`, so each key gets an independent
sequence and adding rounds or clients never shifts an existing stream.
"""

import numpy as np

# stream purposes
DATA = 0
PARTITION = 1
SPLIT = 2
INIT = 3
SAMPLING = 4
BATCH = 5


def generator(seed, *keys):
    """Return a Philox generator for ``seed`` and an optional key path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *keys):
    """Collapse ``(seed, *keys)`` into one 63-bit integer seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
