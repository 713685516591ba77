"""Seeded random number streams.

A single master seed is split deterministically into named streams so that
dataset generation, weight init, latent noise and environment rollouts can be
reproduced independently of each other.
"""
from __future__ import annotations

import numpy as np

#: Stream names derived from one master seed, in spawn order.
STREAM_NAMES = ("dataset", "init", "noise", "rollout")


def seeded_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator. Same seed + same call sequence = same outputs."""
    return np.random.Generator(np.random.PCG64(seed))


def split_streams(master_seed: int, names=STREAM_NAMES) -> dict:
    """Split a master seed into one independent generator per name."""
    children = np.random.SeedSequence(master_seed).spawn(len(names))
    return {name: np.random.Generator(np.random.PCG64(seq)) for name, seq in zip(names, children)}
