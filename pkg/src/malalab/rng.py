"""Deterministic random-stream derivation.

All randomness in the package flows from a single master seed. Independent
streams are derived with ``substream(seed, *path)``, where ``path`` is a
sequence of small ints or short strings naming the consumer, e.g.
``substream(7, "sweep", 3, "proposals")``. The derivation maps each path
element to a 32-bit key (strings through SHA-256) and feeds the tuple to
``numpy.random.SeedSequence`` as a spawn key, so streams are reproducible
and independent of scheduling or execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np

RandomState = int | np.random.Generator


def _key_part(part) -> int:
    if isinstance(part, (bool, float)):
        raise TypeError(f"stream path parts must be ints or strings, got {part!r}")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream path ints must be nonnegative, got {part}")
        return int(part) % (2**32)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "little")
    raise TypeError(f"stream path parts must be ints or strings, got {part!r}")


def seed_sequence(seed: int, *path) -> np.random.SeedSequence:
    """SeedSequence for the stream named by ``path`` under master ``seed``."""
    return np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(_key_part(p) for p in path)
    )


def substream(seed: RandomState, *path) -> np.random.Generator:
    """Generator for the stream named by ``path`` under master ``seed``.

    An existing Generator is passed through unchanged (the path is ignored),
    so helpers can accept either a seed or an already-derived stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed_sequence(seed, *path))
