"""Independent slow-path oracles used to pin expected values.

Everything here recomputes from first principles with plain Python loops or
exhaustive enumeration, deliberately sharing no code with the engine paths
it checks.
"""

from itertools import combinations

import numpy as np

from subsel import FeatureMatrix, SimilarityKernel, cosine_kernel, normalize_rows


def fl_value_slow(values: np.ndarray, subset) -> float:
    """Facility-location value by direct loops; empty subsets score 0."""
    subset = list(subset)
    if not subset:
        return 0.0
    total = 0.0
    for i in range(values.shape[0]):
        total += max(float(values[i, j]) for j in subset)
    return total


def opt_exhaustive(values: np.ndarray, budget: int) -> float:
    """Optimal value over all subsets of exactly `budget` elements."""
    m = values.shape[0]
    return max(fl_value_slow(values, c) for c in combinations(range(m), budget))


def greedy_recompute(values: np.ndarray, budget: int):
    """Greedy by full re-evaluation each step, lowest index on ties."""
    m = values.shape[0]
    chosen: list[int] = []
    gains: list[float] = []
    current = 0.0
    for _ in range(budget):
        best_e, best_gain = -1, -np.inf
        for e in range(m):
            if e in chosen:
                continue
            gain = fl_value_slow(values, chosen + [e]) - current
            if gain > best_gain:
                best_e, best_gain = e, gain
        chosen.append(best_e)
        gains.append(best_gain)
        current += best_gain
    return chosen, gains


def random_kernel(rng: np.random.Generator, m: int) -> SimilarityKernel:
    """Arbitrary symmetric [0,1] kernel with unit diagonal (not cosine-based)."""
    upper = np.triu(rng.random((m, m)).astype(np.float32), k=1)
    values = upper + upper.T
    np.fill_diagonal(values, np.float32(1.0))
    return SimilarityKernel(values=values, clipped=True)


def random_cosine_kernel(rng: np.random.Generator, m: int, d: int = 4) -> SimilarityKernel:
    """Clipped cosine kernel of random unit feature rows (exercises clipping)."""
    rows = rng.normal(size=(m, d)).astype(np.float32)
    fm, _ = normalize_rows(FeatureMatrix(rows))
    return cosine_kernel(fm)
