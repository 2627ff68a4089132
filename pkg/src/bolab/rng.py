"""Seeded random streams.

Every random draw in the package comes from a Philox counter-based generator
keyed by ``(master_seed, role, index)``. Streams for different roles (design,
noise, beta, ...) never share state, so changing one leaves the others
bit-identical.
"""

from __future__ import annotations

import hashlib

import numpy as np

GENERATOR_ID = "numpy.random.Philox+SeedSequence(master_seed,[role_code,index])"

ROLES = ("design", "noise", "beta", "rotation", "test_point", "transform", "check")


def role_code(role: str) -> int:
    # stable across interpreter runs, unlike hash()
    digest = hashlib.sha256(role.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def stream(master_seed: int, role: str, index: int = 0) -> np.random.Generator:
    """Return an independent generator for one (seed, role, index) triple."""
    if master_seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(role_code(role), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def derived_seed(master_seed: int, role: str, index: int = 0) -> int:
    """A 64-bit integer summarizing a stream, for records and sidecars."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(role_code(role), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
