"""Seeding for reproducible parallel Monte Carlo.

Every random draw in the package comes from a ``(master, stream)`` pair.
The pair feeds an SFC64 generator through a ``SeedSequence`` spawn key, so
distinct streams are statistically independent and a shard's output does not
depend on which worker runs it or in what order.
"""

import hashlib
from typing import NamedTuple

import numpy as np


class Seed(NamedTuple):
    master: int
    stream: int = 0


def as_seed(seed) -> Seed:
    """Accept an int, a 2-tuple or a :class:`Seed`."""
    if isinstance(seed, Seed):
        return seed
    if isinstance(seed, (int, np.integer)):
        return Seed(int(seed), 0)
    master, stream = seed
    return Seed(int(master), int(stream))


def stream_id(*parts) -> int:
    """64-bit stream id derived from arbitrary labels (task name, replica, ...)."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def generator(seed) -> np.random.Generator:
    seed = as_seed(seed)
    ss = np.random.SeedSequence(seed.master & (2**64 - 1), spawn_key=(seed.stream & (2**64 - 1),))
    return np.random.Generator(np.random.SFC64(ss))


def child(seed, *labels) -> Seed:
    """Seed for a sub-task (shard, replica block) of ``seed``."""
    seed = as_seed(seed)
    return Seed(seed.master, stream_id(seed.stream, *labels))
