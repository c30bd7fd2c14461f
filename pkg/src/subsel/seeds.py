"""Deterministic derivation of per-task RNG seeds.

Every stochastic component receives an integer seed derived from the master
seed plus a purpose tag (and usually a block id or step index), so results
never depend on scheduling order or worker count.
"""

from __future__ import annotations

import numpy as np

# Purpose tags keeping independent streams apart.
KIND_PLAN = 1
KIND_GREEDY = 2
KIND_SAMPLE = 3
KIND_SESSION_DRAW = 4


def derive_seed(master_seed: int, *fields: int) -> int:
    """Hash (master_seed, *fields) into a fresh 64-bit seed."""
    ss = np.random.SeedSequence(entropy=[int(master_seed), *(int(f) for f in fields)])
    return int(ss.generate_state(1, np.uint64)[0])
