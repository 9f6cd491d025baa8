"""Deterministic RNG derivation from hierarchical keys."""

from __future__ import annotations

import hashlib

import numpy as np


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & (2**63 - 1)
    digest = hashlib.sha256(str(key).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def seed_seq(*keys) -> np.random.SeedSequence:
    return np.random.SeedSequence([_key_int(k) for k in keys])


def rng_from(*keys) -> np.random.Generator:
    return np.random.default_rng(seed_seq(*keys))


def int_seed(*keys) -> int:
    """A stable 63-bit integer seed derived from the keys."""
    return int(seed_seq(*keys).generate_state(1, dtype=np.uint64)[0] >> 1)
