"""Deterministic per-cell random streams."""

from __future__ import annotations

import numpy as np


def float_key(x: float) -> int:
    """Integer key for a grid value such as a density or a noise variance (micro-units)."""
    return int(round(float(x) * 1_000_000))


def derive_rng(base_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(base_seed, *keys)`` via SeedSequence entropy mixing."""
    entropy = [int(base_seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    if any(k < 0 for k in entropy):
        raise ValueError("seed keys must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence(entropy))
