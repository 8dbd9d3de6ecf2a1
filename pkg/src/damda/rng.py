"""Deterministic random-stream derivation.

All randomness flows from one user seed; sub-streams are derived from
(seed, *key) through a counter-based generator so replicates and components
are reproducible across platforms and independent of execution order.
"""

from __future__ import annotations

import numpy as np


def child_rng(seed: int, *key: int) -> np.random.Generator:
    entropy = [int(seed)] + [int(k) for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
