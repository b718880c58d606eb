"""Small shared helpers: deterministic RNG derivation."""

from __future__ import annotations

import zlib

import numpy as np


def _entropy_word(tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    raise TypeError(f"unsupported rng tag type: {type(tag)!r}")


def seeded_rng(*tags) -> np.random.Generator:
    """Derive an independent Generator from a tuple of ints/strings.

    The same tag tuple always yields the same stream, and distinct tuples
    yield statistically independent streams, so callers can generate in any
    order (or in parallel) without coupling.
    """
    entropy = [_entropy_word(t) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def mix_seed(*tags) -> int:
    """Fold arbitrary tags into one stable 32-bit seed."""
    crc = 0
    for t in tags:
        crc = zlib.crc32(repr(t).encode("utf-8"), crc)
    return crc
