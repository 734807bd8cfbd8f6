"""Counter-based random streams.

All randomness in the package flows through Philox-4x64-10 (the Random123
counter-based generator as shipped by numpy).  Streams are separated by
*key*, not by sequential state: a stream is identified by the pair

    key = (master_seed, purpose << 32 | index)

so any worker can open any stream directly and results never depend on the
order in which streams are consumed.  Distinct keys give statistically
independent streams by construction.
"""

from __future__ import annotations

import numpy as np

_WORD = 0xFFFFFFFFFFFFFFFF

# purpose words, one per independent use of randomness
PU_ACTIVITY = 1
OBSERVATIONS = 2
PROBES = 3
COUPLING_DRAW = 4
OPTIMIZER = 5
GENERIC = 6


def stream(master_seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Open the (purpose, index) substream of a master seed.

    Deterministic: the same triple always yields the same stream, no matter
    how many other streams were opened before it.
    """
    if not 0 <= master_seed <= _WORD:
        raise ValueError(f"master seed must fit in 64 bits, got {master_seed}")
    if purpose < 0 or index < 0:
        raise ValueError("purpose and index must be nonnegative")
    key = np.array(
        [master_seed, ((purpose & 0xFFFFFFFF) << 32) | (index & 0xFFFFFFFF)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
