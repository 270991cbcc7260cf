"""Deterministic random streams.

Every stream is a numpy ``Philox`` (counter-based) generator keyed by
``blake2b(seed, label, index)``, so trial ``i`` of an experiment sees the same
randomness regardless of how trials are scheduled across workers.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, label: str, index: int = 0) -> int:
    h = hashlib.blake2b(f"{int(seed)}\x00{label}\x00{int(index)}".encode(), digest_size=16)
    return int.from_bytes(h.digest(), "little")


def stream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Generator for stream ``index`` under ``label``."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, label, index)))


def child(rng: np.random.Generator, label: str) -> np.random.Generator:
    """Fork a labelled sub-stream off an existing generator (consumes one draw)."""
    return stream(int(rng.integers(0, 2**63)), label)
