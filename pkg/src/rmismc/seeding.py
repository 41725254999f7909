"""Hierarchical, collision-free random streams.

Every random stream is a :class:`numpy.random.SeedSequence` whose spawn key
encodes its position in the experiment tree, e.g.
``(method, budget, realization, *index)``.  Streams are consumed through
counter-based Philox generators, so results do not depend on execution order
or on how work is spread over threads.
"""

from __future__ import annotations

import zlib
from typing import Sequence

import numpy as np


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def name_key(name: str) -> int:
    """Stable integer for a string label (CRC32)."""
    return zlib.crc32(name.encode("utf-8"))


def child(seed, *key: int | str | Sequence[int]) -> np.random.SeedSequence:
    """Extend the spawn key of ``seed`` by ``key``.

    Strings are hashed with :func:`name_key`; sequences (multi-indices) are
    prefixed with their length so that keys of different shapes never
    collide.
    """
    ss = as_seed_sequence(seed)
    ext: list[int] = []
    for k in key:
        if isinstance(k, str):
            ext.append(name_key(k))
        elif isinstance(k, (tuple, list, np.ndarray)):
            vals = [int(v) for v in k]
            ext.append(len(vals))
            ext.extend(vals)
        else:
            ext.append(int(k))
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(ext))


def generator(seed) -> np.random.Generator:
    """Philox-backed generator for ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(as_seed_sequence(seed)))
