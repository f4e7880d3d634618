"""Deterministic random-number streams.

Every stochastic component draws from a numpy Philox generator (a
counter-based PRNG), keyed by a master seed plus a string label.  Child
streams are derived by hashing the label into the Philox key, so
sub-tasks (per-trajectory seeds, per-action sampling, noise draws) are
reproducible and independent of execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "child_seed"]


def _key(master_seed: int, label: str) -> int:
    h = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
    return int.from_bytes(h[:16], "little")


def stream(master_seed: int, label: str = "") -> np.random.Generator:
    """Return a Generator for (master_seed, label), stable across runs."""
    return np.random.Generator(np.random.Philox(key=_key(master_seed, label)))


def child_seed(master_seed: int, label: str) -> int:
    """Derive a 63-bit child seed, e.g. for per-trajectory workers."""
    return _key(master_seed, label) & (2**63 - 1)
