"""Deterministic seed derivation.

Every random stream in the package is derived from a master seed through
:func:`mix`, so results do not depend on how work is split across workers.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def stable_hash(value) -> int:
    """64-bit hash of a JSON-serializable value, stable across processes."""
    blob = json.dumps(value, sort_keys=True, separators=(",", ":"), default=str)
    return int.from_bytes(hashlib.blake2b(blob.encode(), digest_size=8).digest(), "little")


def mix(*parts) -> int:
    """Fold integers (or hashable JSON values) into one 64-bit seed."""
    h = 0x243F6A8885A308D3
    for part in parts:
        if not isinstance(part, (int, np.integer)):
            part = stable_hash(part)
        h = _splitmix64(h ^ (int(part) & MASK64))
    return h


def rng_for(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix(*parts)))
