"""Deterministic seed derivation for named sub-streams."""

from __future__ import annotations

import numpy as np


def derive_seed(*parts: int) -> int:
    """Collapse a tuple of non-negative ints into one reproducible seed."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])
