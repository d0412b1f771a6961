"""Seed handling.

Replication ``r`` of an experiment seeded with ``seed`` draws from
``SeedSequence(seed, spawn_key=(r, stream))``; adding replications never
changes the streams of earlier ones.
"""

from __future__ import annotations

import numpy as np

EVENTS = 0
NOISE = 1


def as_seed(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63))
    if rng is None:
        return int(np.random.SeedSequence().entropy % 2**63)
    return int(rng)


def substream(seed: int, rep: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(rep), int(stream))))


def derive(seed: int, label: str) -> int:
    """Independent seed for a named analysis under the same master seed."""
    import zlib

    ss = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
