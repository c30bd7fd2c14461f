"""Facility-location evaluation and greedy maximizers.

The objective over a block kernel K is f(A) = sum_i max_{j in A} K_ij.
A memo of per-point best similarities makes marginal gains O(m); the greedy
family (naive, lazy, stochastic) shares one gain-evaluation code path so the
variants are exactly interchangeable under identical tie-breaking
(lowest index wins).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .kernel import SimilarityKernel


def _gain_one(kv: np.ndarray, best: np.ndarray, e: int) -> float:
    # kernel row e equals column e (exact symmetry), so rows stay contiguous;
    # float32 - float64 upcasts exactly, no temporary needed
    return float(np.maximum(kv[e] - best, 0.0).sum())


def _gain_many(kv: np.ndarray, best: np.ndarray, rows) -> np.ndarray:
    # bitwise identical per element to _gain_one on each row
    return np.maximum(kv[rows] - best[None, :], 0.0).sum(axis=1)


def _initial_gains(kv: np.ndarray) -> np.ndarray:
    """Gains from the empty selection for every element, in row tiles."""
    m = kv.shape[0]
    zeros = np.zeros(m, dtype=np.float64)
    out = np.empty(m, dtype=np.float64)
    for r0 in range(0, m, 512):
        r1 = min(r0 + 512, m)
        out[r0:r1] = _gain_many(kv, zeros, slice(r0, r1))
    return out


@dataclass
class FacilityLocationMemo:
    """Running state of an incremental facility-location evaluation.

    best[i] is the highest similarity of point i to any selected point
    (0 while nothing is selected); value is the current objective.
    """

    best: np.ndarray
    value: float = 0.0
    selected: set[int] = field(default_factory=set)

    @classmethod
    def empty(cls, m: int) -> "FacilityLocationMemo":
        return cls(best=np.zeros(m, dtype=np.float64))


def _check_index(m: int, e: int) -> int:
    e = int(e)
    if not 0 <= e < m:
        raise InvalidInputError(f"index {e} out of range for block of size {m}")
    return e


def fl_evaluate(kernel: SimilarityKernel, selected) -> float:
    """Exact facility-location value of an index set; empty set scores 0."""
    idx = np.unique(np.asarray(sorted(int(i) for i in selected), dtype=np.int64))
    if idx.size == 0:
        return 0.0
    if idx[0] < 0 or idx[-1] >= kernel.m:
        raise InvalidInputError(
            f"selection contains indices outside 0..{kernel.m - 1}"
        )
    best = kernel.values[idx].astype(np.float64).max(axis=0)
    return float(best.sum())


def fl_gain(memo: FacilityLocationMemo, kernel: SimilarityKernel, e: int) -> float:
    """Marginal gain f(S + e) - f(S) of adding e to the memoized selection."""
    e = _check_index(kernel.m, e)
    if e in memo.selected:
        raise InvalidInputError(f"index {e} is already selected")
    return _gain_one(kernel.values, memo.best, e)


def fl_update_memo(
    memo: FacilityLocationMemo, kernel: SimilarityKernel, e: int
) -> FacilityLocationMemo:
    """Fold element e into the memo (in place) and return it."""
    e = _check_index(kernel.m, e)
    if e in memo.selected:
        raise InvalidInputError(f"index {e} is already selected")
    np.maximum(memo.best, kernel.values[e], out=memo.best)
    memo.value = float(memo.best.sum())
    memo.selected.add(e)
    return memo


@dataclass(frozen=True)
class GreedyResult:
    """Pick order with the marginal gain recorded at each pick."""

    order: np.ndarray
    gains: np.ndarray
    algorithm: str
    epsilon: float | None = None
    seed: int | None = None

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        gains = np.asarray(self.gains, dtype=np.float64)
        if order.shape != gains.shape or order.ndim != 1:
            raise InvalidInputError("order and gains must be aligned 1-D sequences")
        if len(np.unique(order)) != len(order):
            raise InvalidInputError("greedy order contains duplicate indices")
        if gains.size and gains.min() < 0.0:
            raise InvalidInputError("greedy gains must be non-negative")
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "gains", gains)

    def __len__(self) -> int:
        return len(self.order)

    def gains_by_index(self, m: int) -> np.ndarray:
        """Gains re-aligned to block-local index order (unpicked stay 0)."""
        out = np.zeros(m, dtype=np.float64)
        out[self.order] = self.gains
        return out


def _check_budget(m: int, budget: int) -> int:
    budget = int(budget)
    if not 1 <= budget <= m:
        raise InvalidInputError(f"budget {budget} out of range 1..{m}")
    return budget


def naive_greedy(kernel: SimilarityKernel, budget: int) -> GreedyResult:
    """Plain greedy: every step scans all remaining candidates."""
    m = kernel.m
    budget = _check_budget(m, budget)
    kv = kernel.values
    best = np.zeros(m, dtype=np.float64)
    mask = np.zeros(m, dtype=bool)
    order: list[int] = []
    gains: list[float] = []
    for _ in range(budget):
        remaining = np.flatnonzero(~mask)
        g = _gain_many(kv, best, remaining)
        j = int(np.argmax(g))  # first max = lowest index
        e = int(remaining[j])
        order.append(e)
        gains.append(float(g[j]))
        np.maximum(best, kv[e], out=best)
        mask[e] = True
    return GreedyResult(np.array(order), np.array(gains), algorithm="naive")


def lazy_greedy(kernel: SimilarityKernel, budget: int) -> GreedyResult:
    """Priority-queue greedy revalidating stale gains on pop.

    Produces exactly the same sequence as naive_greedy: stale gains are upper
    bounds under diminishing returns, and the heap breaks gain ties by lowest
    index, matching the naive scan order.
    """
    m = kernel.m
    budget = _check_budget(m, budget)
    kv = kernel.values
    best = np.zeros(m, dtype=np.float64)
    initial = _initial_gains(kv)
    # entries: (-gain, index, round at which the gain was computed)
    heap = [(-float(initial[i]), i, 0) for i in range(m)]
    heapq.heapify(heap)
    order: list[int] = []
    gains: list[float] = []
    for round_no in range(budget):
        while True:
            neg_g, e, computed_at = heapq.heappop(heap)
            if computed_at == round_no:
                break
            g = _gain_one(kv, best, e)
            heapq.heappush(heap, (-g, e, round_no))
        order.append(e)
        gains.append(-neg_g)
        np.maximum(best, kv[e], out=best)
    return GreedyResult(np.array(order), np.array(gains), algorithm="lazy")


def stochastic_sample_size(m: int, budget: int, epsilon: float) -> int:
    """Per-step candidate sample size ceil((m/b) * ln(1/epsilon))."""
    return int(math.ceil((m / budget) * math.log(1.0 / epsilon)))


def stochastic_greedy(
    kernel: SimilarityKernel, budget: int, epsilon: float, seed: int
) -> GreedyResult:
    """Greedy over uniform candidate samples with lazy revalidation.

    Each step draws s = min(remaining, ceil((m/b) ln(1/eps))) candidates
    uniformly from the remaining pool and selects the sample's exact argmax
    (lowest index on ties). When the sample covers the whole pool the output
    equals naive_greedy.
    """
    m = kernel.m
    budget = _check_budget(m, budget)
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError(f"epsilon must be in (0, 1), got {epsilon}")
    rng = np.random.default_rng(int(seed))
    kv = kernel.values
    best = np.zeros(m, dtype=np.float64)
    mask = np.zeros(m, dtype=bool)
    # stale[i] is always an upper bound on the true gain of i
    stale = _initial_gains(kv)
    s_nominal = stochastic_sample_size(m, budget, epsilon)
    order: list[int] = []
    gains: list[float] = []
    for _ in range(budget):
        remaining = np.flatnonzero(~mask)
        if s_nominal >= remaining.size:
            cand = remaining
        else:
            cand = np.sort(rng.choice(remaining, size=s_nominal, replace=False))
        visit = cand[np.lexsort((cand, -stale[cand]))]
        best_e = -1
        best_g = -1.0
        for e in visit:
            e = int(e)
            bound = float(stale[e])
            if best_e >= 0 and (
                best_g > bound or (best_g == bound and best_e < e)
            ):
                break  # nothing later in the visit order can win
            g = _gain_one(kv, best, e)
            stale[e] = g
            if best_e < 0 or g > best_g or (g == best_g and e < best_e):
                best_g, best_e = g, e
        order.append(best_e)
        gains.append(best_g)
        np.maximum(best, kv[best_e], out=best)
        mask[best_e] = True
    return GreedyResult(
        np.array(order),
        np.array(gains),
        algorithm="stochastic",
        epsilon=float(epsilon),
        seed=int(seed),
    )


def full_ordering(kernel: SimilarityKernel, epsilon: float, seed: int) -> GreedyResult:
    """Stochastic greedy run to exhaustion: an ordering of the whole block."""
    return stochastic_greedy(kernel, kernel.m, epsilon, seed)
