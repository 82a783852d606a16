"""Counter-based random streams keyed by ``(seed, trial, role)``.

Each Monte Carlo trial gets its own Philox generator, so results do not depend
on how trials are distributed across workers.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "role_id"]


def role_id(role: str) -> int:
    """Stable 32-bit identifier for a stream role name."""
    return zlib.crc32(role.encode("utf-8"))


def stream(seed: int, trial: int, role: str, *extra: int) -> np.random.Generator:
    """Independent generator for one ``(seed, trial, role, *extra)`` key.

    ``extra`` distinguishes sub-experiments (e.g. SNR index) that must not share
    noise.  Keys are hashed by :class:`numpy.random.SeedSequence`.
    """
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if trial < 0:
        raise ValueError("trial index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(role_id(role), int(trial), *map(int, extra)))
    return np.random.Generator(np.random.Philox(ss))
