"""Deterministic random-stream derivation.

Every stochastic stage derives its own generator from the master seed and a
string label, so adding or reordering stages never shifts the draws of
another stage.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, label: str) -> list[int]:
    """Entropy pair for `label`: the master seed plus a stable label hash."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int(master_seed), int.from_bytes(digest[:8], "big")]


def derive_rng(master_seed: int, label: str) -> np.random.Generator:
    """A Generator seeded from (master_seed, label), independent per label."""
    return np.random.default_rng(np.random.SeedSequence(derive_seed(master_seed, label)))
