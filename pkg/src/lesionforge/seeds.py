"""Named deterministic RNG streams derived from a single 64-bit root seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *stream: object) -> int:
    """Hash the root seed together with a stream name into a new 64-bit seed.

    Every consumer of randomness gets its own named stream, so generating
    more samples (or reordering work) never perturbs the draws of existing
    ones: a stream depends only on (root, its own name parts).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root)).encode())
    for part in stream:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "little")


def stream_rng(root: int, *stream: object) -> np.random.Generator:
    """A PCG64 generator seeded from the named stream."""
    return np.random.Generator(np.random.PCG64(derive_seed(root, *stream)))
