"""Seeded random streams for the synthetic harness.

All randomness flows through Philox (4x64, counter-based) generators keyed by
``(seed, stream)``.  Philox streams are reproducible across platforms and
processes for a fixed numpy version, and distinct stream ids give independent
sequences, so per-scene work can be farmed out to any number of workers
without changing results.
"""
from __future__ import annotations

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for ``(seed, stream)``; identical args, identical draws."""
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
