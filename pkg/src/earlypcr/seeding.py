"""Named, reproducible random streams.

Every random draw in the package comes from a generator seeded by
``derive_seed(master, *keys)``.  Keys are mixed in order with splitmix64, so
``stream(7, "augment", "P0003")`` is independent of ``stream(7, "sampler")``
and does not shift when other streams are added or consumed.  Draws use
numpy's PCG64.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _key_to_int(key) -> int:
    if isinstance(key, bool):
        key = int(key)
    if isinstance(key, int):
        return key & MASK64
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master: int, *keys) -> int:
    h = splitmix64(_key_to_int(master))
    for key in keys:
        h = splitmix64(h ^ _key_to_int(key))
    return h


def stream(master: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *keys)))
