"""Deterministic RNG substreams.

Every random draw in the package flows from one run seed through named
substreams, so results cannot depend on worker count or iteration order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _component(part: int | str) -> int:
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode("utf-8")).digest()[:8], "big")
    if part < 0:
        raise ValueError(f"substream path components must be non-negative, got {part}")
    return int(part)


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Generator for the substream identified by (seed, *path)."""
    key = tuple(_component(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


def stable_hash(text: str) -> int:
    """Platform-stable 64-bit hash of a string (unlike builtin hash)."""
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
