"""Deterministic random-stream derivation.

Every stochastic unit of work (a time point, a noise run, a batch trial)
owns a generator derived from the master seed plus a structured key, so
results do not depend on execution order or parallelism.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_ints(key: tuple) -> list[int]:
    out = []
    for part in key:
        if isinstance(part, (int, np.integer)):
            out.append(int(part) & 0xFFFFFFFFFFFFFFFF)
        elif isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).hexdigest()
            out.append(int(digest[:16], 16))
        else:
            raise TypeError(f"stream key parts must be int or str, got {type(part)!r}")
    return out


def stream(*key) -> np.random.Generator:
    """Return a generator for the stream identified by ``key``."""
    return np.random.default_rng(np.random.SeedSequence(_key_ints(key)))


def child_seed(*key) -> int:
    """Derive a 64-bit integer seed from ``key`` (for nested plans/trials)."""
    seq = np.random.SeedSequence(_key_ints(key))
    return int(seq.generate_state(1, np.uint64)[0])
