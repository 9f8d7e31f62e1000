"""Counter-based random streams.

Every random draw in the package is keyed by a tuple of integers
(seed, stream tag, entity, day, ...) instead of by call order, so work
can be split across days, targets or threads without changing results.
"""
from __future__ import annotations

import hashlib

import numba
import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *names: object) -> int:
    """Derive a 64-bit sub-seed from a global seed and a path of names."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & MASK64).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    return int.from_bytes(h.digest(), "little")


def generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, *key)``."""
    ss = np.random.SeedSequence([int(seed) & MASK64, *(int(k) & MASK64 for k in key)])
    return np.random.Generator(np.random.Philox(ss))


@numba.njit(cache=True, inline="always")
def splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def stream_key(a, b, c, d):
    """Mix four 64-bit integers into one stream key."""
    k = splitmix64(np.uint64(a))
    k = splitmix64(k ^ np.uint64(b))
    k = splitmix64(k ^ np.uint64(c))
    return splitmix64(k ^ np.uint64(d))


@numba.njit(cache=True, inline="always")
def uniform_at(key, counter):
    """Uniform double in [0, 1) for draw number ``counter`` of stream ``key``."""
    z = splitmix64(key ^ splitmix64(np.uint64(counter)))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
