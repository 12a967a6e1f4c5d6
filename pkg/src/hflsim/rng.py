"""Deterministic random-stream fan-out.

A single run seed is expanded into independent named substreams
("mobility", "data", "td3", "noise", ...) so that subsystems never share
generator state and per-entity draws do not depend on iteration order.
Streams are backed by Philox keyed on (seed, blake2b(label)), which numpy
guarantees to be stable across platforms and releases.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["label_key", "stream"]

_MASK64 = (1 << 64) - 1


def label_key(*path: object) -> int:
    """Hash a stream label path ("td3", uav_id, round, ...) to 64 bits."""
    label = "/".join(str(p) for p in path)
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, *path: object) -> np.random.Generator:
    """Return the generator for substream `path` of run `seed`.

    The same (seed, path) always yields an identical generator, and two
    distinct paths yield statistically independent Philox keys, so callers
    may draw from per-entity streams in any order without changing results.
    """
    if not path:
        raise ValueError("stream path must have at least one component")
    key = np.array([seed & _MASK64, label_key(*path)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
