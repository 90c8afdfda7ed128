"""Deterministic RNG derivation: one root seed, labeled child streams."""

from __future__ import annotations

import hashlib

import numpy as np


def spawn_rng(seed: int, *labels: str | int) -> np.random.Generator:
    """Child generator for (seed, labels); stable across runs and platforms."""
    key = []
    for label in labels:
        digest = hashlib.sha256(str(label).encode()).digest()
        key.append(int.from_bytes(digest[:4], "little"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def derive_seed(seed: int, *labels: str | int) -> int:
    """Stable 31-bit child seed for interfaces that take a plain int."""
    text = str(seed) + "".join("|" + str(label) for label in labels)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:4], "little") % (2**31)
