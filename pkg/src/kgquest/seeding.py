"""Stable seed derivation for reproducible, order-independent sampling."""

from __future__ import annotations

import hashlib
import random


def stable_seed(*parts: object) -> int:
    """Derive a 64-bit seed from the given parts via SHA-256.

    Independent of platform hash randomization and of the order in which
    items are processed, so per-item RNG streams are reproducible under
    parallel generation.
    """
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(joined.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(*parts: object) -> random.Random:
    return random.Random(stable_seed(*parts))
