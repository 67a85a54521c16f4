"""Seed handling.  All randomness flows through numpy ``Generator`` objects
(PCG64), which are splittable via ``SeedSequence.spawn``."""
from __future__ import annotations

import os
from typing import Optional, Union

import numpy as np

RngLike = Union[None, int, np.random.Generator]


def resolve_rng(rng: RngLike = None) -> tuple[np.random.Generator, Optional[int]]:
    """Return a generator and the integer seed it came from (if known)."""
    if isinstance(rng, np.random.Generator):
        seq = getattr(rng.bit_generator, "seed_seq", None)
        entropy = getattr(seq, "entropy", None)
        return rng, entropy if isinstance(entropy, int) else None
    if rng is None:
        env = os.environ.get("PKBD_SEED")
        if env is not None:
            rng = int(env)
        else:
            rng = int(np.random.SeedSequence().entropy % (2**63))
    seed = int(rng)
    return np.random.default_rng(seed), seed


def spawn(rng: np.random.Generator, k: int) -> list[np.random.Generator]:
    """k independent child streams."""
    return list(rng.spawn(k))
