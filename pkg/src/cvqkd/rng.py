"""Deterministic random streams.

Every random draw in the simulator comes from a Philox counter-based
generator keyed by ``(master_seed XOR frame_id, stream)``.  Results
therefore depend only on the seed and the frame index, never on the order
in which frames are scheduled.
"""

import numpy as np

_MASK = (1 << 64) - 1

# stream identifiers; fixed so that adding a stream never shifts another
SYMBOLS = 1
EXCESS = 2
PHASE = 3
SHOT = 4
ELECTRONIC = 5
RAMAN = 6
CAL_VACUUM = 7
CAL_ELECTRONIC = 8


def generator(master_seed, frame_id=0, stream=0):
    key = np.array([(int(master_seed) ^ int(frame_id)) & _MASK, int(stream) & _MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return generator(seed)
