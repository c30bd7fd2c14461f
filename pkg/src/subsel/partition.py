"""Random equal-size partitioning and per-block parallel selection.

The corpus is split into random blocks of (near-)equal size; each block gets
its own cosine kernel, full greedy ordering, and Taylor-softmax distribution,
built under a bounded worker pool with mandatory kernel-memory admission.
Blocks are seeded from (master seed, block id, purpose), so results are
bit-identical for any worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import multiprocessing
from concurrent.futures import FIRST_EXCEPTION, ProcessPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CapacityError, InvalidInputError
from .features import FeatureMatrix, normalize_rows
from .kernel import cosine_kernel, kernel_memory_bytes
from .sampling import SamplingDistribution, sample_without_replacement, taylor_softmax
from .seeds import KIND_GREEDY, KIND_PLAN, KIND_SAMPLE, derive_seed
from .submodular import GreedyResult, full_ordering

log = logging.getLogger(__name__)

ARTIFACT_FORMAT = "subsel-ordering-artifact"
ARTIFACT_VERSION = 1

# Blocks of about this many samples keep one kernel ~64 MiB. Reference runs
# on hundred-million-scale corpora used absolute block counts (e.g. 1500);
# those are corpus-specific, so the engine defaults to a size target instead.
DEFAULT_BLOCK_SIZE_TARGET = 4096


def default_num_blocks(n: int) -> int:
    """Smallest block count keeping block size at or under the default target."""
    if n < 1:
        raise InvalidInputError(f"corpus size must be >= 1, got {n}")
    return max(1, math.ceil(n / DEFAULT_BLOCK_SIZE_TARGET))


@dataclass(frozen=True)
class PartitionPlan:
    """A seeded random permutation of 0..n-1 chunked into near-equal blocks."""

    n: int
    num_blocks: int
    seed: int
    permutation: np.ndarray
    offsets: np.ndarray
    block_of: np.ndarray
    local_of: np.ndarray

    @property
    def block_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def max_block_size(self) -> int:
        return int(self.block_sizes.max())

    def block_indices(self, block_id: int) -> np.ndarray:
        """Global indices belonging to one block, in block-local order."""
        return self.permutation[self.offsets[block_id] : self.offsets[block_id + 1]]


def make_partition(n: int, num_blocks: int, seed: int) -> PartitionPlan:
    """Uniformly random partition into `num_blocks` blocks differing by <= 1."""
    if n < 1:
        raise InvalidInputError(f"corpus size must be >= 1, got {n}")
    if not 1 <= num_blocks <= n:
        raise InvalidInputError(
            f"block count must be in 1..{n} (corpus size), got {num_blocks}"
        )
    permutation = np.random.default_rng(int(seed)).permutation(n).astype(np.int64)
    base, rem = divmod(n, num_blocks)
    sizes = np.full(num_blocks, base, dtype=np.int64)
    sizes[:rem] += 1
    offsets = np.zeros(num_blocks + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    block_of = np.empty(n, dtype=np.int64)
    local_of = np.empty(n, dtype=np.int64)
    for b in range(num_blocks):
        members = permutation[offsets[b] : offsets[b + 1]]
        block_of[members] = b
        local_of[members] = np.arange(members.size)
    return PartitionPlan(
        n=n,
        num_blocks=num_blocks,
        seed=int(seed),
        permutation=permutation,
        offsets=offsets,
        block_of=block_of,
        local_of=local_of,
    )


@dataclass(frozen=True)
class BudgetSplit:
    """Per-block sample budgets summing to the total subset size."""

    total: int
    budgets: np.ndarray


def split_budget(k: int, plan: PartitionPlan) -> BudgetSplit:
    """floor(k/N) per block, remainder to the first blocks, capped at size."""
    k = int(k)
    if not plan.num_blocks <= k <= plan.n:
        raise InvalidInputError(
            f"subset size {k} out of range {plan.num_blocks}..{plan.n}"
        )
    base, rem = divmod(k, plan.num_blocks)
    budgets = np.full(plan.num_blocks, base, dtype=np.int64)
    budgets[:rem] += 1
    sizes = plan.block_sizes
    # Plans from make_partition never overflow, but cap defensively.
    np.minimum(budgets, sizes, out=budgets)
    short = k - int(budgets.sum())
    while short > 0:
        spare = np.flatnonzero(budgets < sizes)
        take = spare[:short]
        if take.size == 0:  # unreachable: k <= n guarantees spare capacity
            raise InvalidInputError(f"cannot place {short} samples in any block")
        budgets[take] += 1
        short -= take.size
    return BudgetSplit(total=k, budgets=budgets)


@dataclass(frozen=True)
class BlockOrdering:
    """One block's greedy ordering, gains, and sampling distribution."""

    block_id: int
    order_local: np.ndarray
    order_global: np.ndarray
    gains: np.ndarray
    distribution: SamplingDistribution
    seed: int


@dataclass(frozen=True)
class OrderingArtifact:
    """All per-block orderings plus the plan and config fingerprint."""

    plan: PartitionPlan
    epsilon: float
    master_seed: int
    fingerprint: str
    blocks: tuple[BlockOrdering, ...]
    peak_kernel_bytes: int = 0  # observed during build; 0 when loaded


class KernelMemoryTracker:
    """Peak accounting of kernel bytes concurrently alive across workers."""

    def __init__(self, context: multiprocessing.context.BaseContext):
        self._lock = context.Lock()
        self._current = context.RawValue("q", 0)
        self._peak = context.RawValue("q", 0)

    def add(self, nbytes: int) -> None:
        with self._lock:
            self._current.value += int(nbytes)
            if self._current.value > self._peak.value:
                self._peak.value = self._current.value

    def release(self, nbytes: int) -> None:
        with self._lock:
            self._current.value -= int(nbytes)

    @property
    def peak_bytes(self) -> int:
        with self._lock:
            return int(self._peak.value)


def _build_block(
    block_id: int,
    rows: np.ndarray,
    epsilon: float,
    seed: int,
    tracker: KernelMemoryTracker,
) -> tuple[int, np.ndarray, np.ndarray]:
    block = FeatureMatrix(rows, normalized=True)
    nbytes = kernel_memory_bytes(block.n, 1)
    tracker.add(nbytes)
    try:
        kern = cosine_kernel(block)
        result = full_ordering(kern, epsilon=epsilon, seed=seed)
        del kern
    finally:
        tracker.release(nbytes)
    log.debug("block %d ordered (%d items)", block_id, block.n)
    return block_id, result.order, result.gains


_WORKER_TRACKER: KernelMemoryTracker | None = None


def _pool_init(tracker: KernelMemoryTracker) -> None:
    global _WORKER_TRACKER
    _WORKER_TRACKER = tracker


def _pool_task(block_id, rows, epsilon, seed):
    return _build_block(block_id, rows, epsilon, seed, _WORKER_TRACKER)


def _config_fingerprint(
    features: FeatureMatrix, plan: PartitionPlan, epsilon: float, master_seed: int
) -> str:
    h = hashlib.sha256()
    desc = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "n": plan.n,
        "d": features.d,
        "num_blocks": plan.num_blocks,
        "plan_seed": plan.seed,
        "epsilon": repr(float(epsilon)),
        "seed": int(master_seed),
    }
    h.update(json.dumps(desc, sort_keys=True).encode())
    h.update(np.ascontiguousarray(features.values).tobytes())
    return h.hexdigest()


def build_orderings(
    features: FeatureMatrix,
    plan: PartitionPlan,
    *,
    epsilon: float,
    master_seed: int,
    workers: int = 1,
    memory_budget: int | None = None,
) -> OrderingArtifact:
    """Kernel + full ordering + distribution for every block of the plan.

    At most `workers` blocks are in flight; admission control refuses to
    start if the concurrent kernels would exceed `memory_budget` bytes.
    """
    if features.n != plan.n:
        raise InvalidInputError(
            f"plan covers {plan.n} samples but features have {features.n}"
        )
    if workers < 1:
        raise InvalidInputError(f"worker count must be >= 1, got {workers}")
    effective_workers = min(int(workers), plan.num_blocks)
    required = kernel_memory_bytes(plan.max_block_size, effective_workers)
    if memory_budget is not None and required > memory_budget:
        raise CapacityError(required, memory_budget)

    if not features.normalized:
        features, _ = normalize_rows(features)
    fingerprint = _config_fingerprint(features, plan, epsilon, master_seed)
    block_seeds = [
        derive_seed(master_seed, KIND_GREEDY, b) for b in range(plan.num_blocks)
    ]

    ctx = multiprocessing.get_context("spawn")
    tracker = KernelMemoryTracker(ctx)
    results: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if effective_workers == 1:
        for b in range(plan.num_blocks):
            rows = features.values[plan.block_indices(b)]
            try:
                _, order, gains = _build_block(b, rows, epsilon, block_seeds[b], tracker)
            except Exception as exc:
                raise RuntimeError(f"ordering failed for block {b}") from exc
            results[b] = (order, gains)
    else:
        with ProcessPoolExecutor(
            max_workers=effective_workers,
            mp_context=ctx,
            initializer=_pool_init,
            initargs=(tracker,),
        ) as pool:
            futures = {}
            for b in range(plan.num_blocks):
                rows = features.values[plan.block_indices(b)]
                futures[pool.submit(_pool_task, b, rows, epsilon, block_seeds[b])] = b
            wait(futures, return_when=FIRST_EXCEPTION)
            for fut, b in futures.items():
                exc = fut.exception()
                if exc is not None:
                    raise RuntimeError(f"ordering failed for block {b}") from exc
                _, order, gains = fut.result()
                results[b] = (order, gains)

    blocks = []
    for b in range(plan.num_blocks):
        order, gains = results[b]
        greedy = GreedyResult(
            order, gains, algorithm="stochastic", epsilon=float(epsilon),
            seed=block_seeds[b],
        )
        gains_local = greedy.gains_by_index(int(plan.block_sizes[b]))
        blocks.append(
            BlockOrdering(
                block_id=b,
                order_local=greedy.order,
                order_global=plan.block_indices(b)[greedy.order],
                gains=greedy.gains,
                distribution=taylor_softmax(gains_local),
                seed=block_seeds[b],
            )
        )
    log.info(
        "built %d block orderings (n=%d, peak kernel bytes=%d)",
        plan.num_blocks, plan.n, tracker.peak_bytes,
    )
    return OrderingArtifact(
        plan=plan,
        epsilon=float(epsilon),
        master_seed=int(master_seed),
        fingerprint=fingerprint,
        blocks=tuple(blocks),
        peak_kernel_bytes=tracker.peak_bytes,
    )


def select_orderings(
    features: FeatureMatrix,
    num_blocks: int,
    *,
    epsilon: float,
    master_seed: int,
    workers: int = 1,
    memory_budget: int | None = None,
) -> OrderingArtifact:
    """Plan the partition from the master seed, then build all orderings.

    Single entry point shared by the CLI and the bindings so both surfaces
    produce identical artifacts for identical (config, seed).
    """
    plan = make_partition(features.n, num_blocks, seed=derive_seed(master_seed, KIND_PLAN))
    return build_orderings(
        features,
        plan,
        epsilon=epsilon,
        master_seed=master_seed,
        workers=workers,
        memory_budget=memory_budget,
    )


def union_sample(artifact: OrderingArtifact, split: BudgetSplit, seed: int) -> np.ndarray:
    """Per-block weighted samples unioned into one global subset of size k."""
    plan = artifact.plan
    budgets = np.asarray(split.budgets, dtype=np.int64)
    if budgets.shape != (plan.num_blocks,):
        raise InvalidInputError(
            f"split has {budgets.size} budgets for {plan.num_blocks} blocks"
        )
    if int(budgets.sum()) != split.total:
        raise InvalidInputError("split budgets do not sum to its total")
    if (budgets > plan.block_sizes).any() or (budgets < 0).any():
        raise InvalidInputError("split budgets exceed block sizes")
    picks = []
    for block in artifact.blocks:
        b = block.block_id
        if budgets[b] == 0:
            continue
        rng = np.random.default_rng(derive_seed(seed, KIND_SAMPLE, b))
        local = sample_without_replacement(block.distribution, int(budgets[b]), rng)
        picks.append(plan.block_indices(b)[local])
    return np.sort(np.concatenate(picks))


def sample_subset(artifact: OrderingArtifact, k: int, seed: int) -> np.ndarray:
    """Draw a size-k subset of global indices from the stored distributions."""
    return union_sample(artifact, split_budget(k, artifact.plan), seed)


def save_artifact(artifact: OrderingArtifact, path: str | Path) -> None:
    """Serialize to the ordering-artifact JSON format (deterministic bytes)."""
    doc = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "fingerprint": artifact.fingerprint,
        "seed": artifact.master_seed,
        "epsilon": artifact.epsilon,
        "plan": {
            "n": artifact.plan.n,
            "n_p": artifact.plan.num_blocks,
            "seed": artifact.plan.seed,
        },
        "blocks": [
            {
                "block_id": block.block_id,
                "global_indices_in_greedy_order": block.order_global.tolist(),
                "gains": block.gains.tolist(),
                "probabilities": block.distribution.probabilities[
                    block.order_local
                ].tolist(),
            }
            for block in artifact.blocks
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_artifact(path: str | Path) -> OrderingArtifact:
    """Load an ordering-artifact JSON file and rebuild block-local state."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != ARTIFACT_FORMAT or doc.get("version") != ARTIFACT_VERSION:
        raise InvalidInputError(f"{path} is not an ordering-artifact file")
    plan = make_partition(doc["plan"]["n"], doc["plan"]["n_p"], doc["plan"]["seed"])
    master_seed = int(doc["seed"])
    epsilon = float(doc["epsilon"])
    seen = np.zeros(plan.n, dtype=bool)
    blocks = []
    for raw in sorted(doc["blocks"], key=lambda r: r["block_id"]):
        b = int(raw["block_id"])
        order_global = np.asarray(raw["global_indices_in_greedy_order"], dtype=np.int64)
        gains = np.asarray(raw["gains"], dtype=np.float64)
        probs_row = np.asarray(raw["probabilities"], dtype=np.float64)
        if (plan.block_of[order_global] != b).any():
            raise InvalidInputError(
                f"artifact block {b} lists indices outside its plan block"
            )
        if seen[order_global].any():
            raise InvalidInputError("artifact lists a global index twice")
        seen[order_global] = True
        order_local = plan.local_of[order_global]
        size = int(plan.block_sizes[b])
        if order_local.size != size:
            raise InvalidInputError(f"artifact block {b} does not cover its block")
        gains_local = np.zeros(size, dtype=np.float64)
        gains_local[order_local] = gains
        probs_local = np.zeros(size, dtype=np.float64)
        probs_local[order_local] = probs_row
        blocks.append(
            BlockOrdering(
                block_id=b,
                order_local=order_local,
                order_global=order_global,
                gains=gains,
                distribution=SamplingDistribution(
                    probabilities=probs_local, gains=gains_local
                ),
                seed=derive_seed(master_seed, KIND_GREEDY, b),
            )
        )
    if not seen.all():
        raise InvalidInputError("artifact does not cover every corpus index")
    return OrderingArtifact(
        plan=plan,
        epsilon=epsilon,
        master_seed=master_seed,
        fingerprint=str(doc["fingerprint"]),
        blocks=tuple(blocks),
    )


def write_subset_file(indices: np.ndarray, path: str | Path) -> None:
    """Newline-delimited global indices, sorted ascending."""
    idx = np.sort(np.asarray(indices, dtype=np.int64))
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{i}\n" for i in idx.tolist())


def read_subset_file(path: str | Path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").split()
    return np.asarray([int(s) for s in lines], dtype=np.int64)
