"""Seeded random streams.

All randomness in the package flows through numpy ``Generator`` objects backed
by the counter-based Philox4x64-10 bit generator. A stream is identified by a
``(base_seed, index, tag)`` triple; its 128-bit Philox key is the first 16 bytes
of ``BLAKE2b(b"mortal-world/v1|<base_seed>|<index>|<tag>")`` read little-endian.
Adding a new tag therefore never perturbs an existing stream, and a stream's
output does not depend on how many other streams were created before it.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(base_seed: int, index: int = 0, tag: str = "") -> int:
    payload = f"mortal-world/v1|{int(base_seed)}|{int(index)}|{tag}".encode()
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    return int.from_bytes(digest, "little")


def make_rng(base_seed: int, index: int = 0, tag: str = "") -> np.random.Generator:
    """Return the generator for stream ``(base_seed, index, tag)``."""
    return np.random.Generator(np.random.Philox(key=stream_key(base_seed, index, tag)))


def as_rng(rng) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(int(rng))


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of one index from ``probs`` using a single uniform.

    Zero-probability entries are never returned; a uniform landing past the
    last cumulative value (row sums a hair under 1) maps to the last index
    with positive mass.
    """
    cdf = np.cumsum(probs)
    u = rng.random()
    i = int(np.searchsorted(cdf, u, side="right"))
    if i >= len(probs):
        i = int(np.flatnonzero(np.asarray(probs) > 0)[-1])
    return i
