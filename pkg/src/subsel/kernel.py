"""Per-block pairwise cosine similarity kernels.

Kernels are materialized per block only, in float32 with float64 dot-product
accumulation, negative similarities clipped to zero so the facility-location
objective stays monotone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidInputError
from .features import FeatureMatrix, normalize_rows, row_norms

# Rows per GEMM tile; bounds the float64 transient to _TILE * m * 8 bytes.
_TILE = 1024


@dataclass(frozen=True)
class SimilarityKernel:
    """Symmetric m x m cosine kernel with values clipped to [0, 1].

    Diagonal entries are exactly 1.0, or 0.0 for degenerate (all-zero) rows.
    """

    values: np.ndarray
    clipped: bool = True

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InvalidInputError(f"kernel must be square, got shape {v.shape}")
        if v.dtype != np.float32:
            raise InvalidInputError(f"kernel must be float32, got {v.dtype}")
        if not np.array_equal(v, v.T):
            raise InvalidInputError("kernel is not exactly symmetric")
        if self.clipped and (v.min() < 0.0 or v.max() > 1.0):
            raise InvalidInputError("clipped kernel has values outside [0, 1]")
        diag = np.diagonal(v)
        if not np.isin(diag, (np.float32(0.0), np.float32(1.0))).all():
            raise InvalidInputError("kernel diagonal entries must be 0.0 or 1.0")

    @property
    def m(self) -> int:
        return self.values.shape[0]


def kernel_memory_bytes(m: int, parallel_workers: int = 1) -> int:
    """Bytes of kernel storage for `parallel_workers` concurrent m x m blocks."""
    if m < 1:
        raise InvalidInputError(f"block size must be >= 1, got {m}")
    if parallel_workers < 1:
        raise InvalidInputError(f"worker count must be >= 1, got {parallel_workers}")
    return int(parallel_workers) * int(m) * int(m) * 4


def cosine_kernel(block: FeatureMatrix, memory_budget: int | None = None) -> SimilarityKernel:
    """Clipped cosine similarity kernel over the rows of one block.

    The upper triangle is computed and mirrored so symmetry holds exactly;
    zero rows get 0.0 everywhere including the diagonal.
    """
    if memory_budget is not None:
        required = kernel_memory_bytes(block.n, 1)
        if required > memory_budget:
            raise CapacityError(required, memory_budget)

    if not block.normalized:
        block, _ = normalize_rows(block)

    m = block.n
    x64 = block.values.astype(np.float64)
    k = np.empty((m, m), dtype=np.float32)
    for r0 in range(0, m, _TILE):
        r1 = min(r0 + _TILE, m)
        # upper strip only; the mirror pass below fills the rest
        tile = x64[r0:r1] @ x64[r0:].T
        np.clip(tile, 0.0, 1.0, out=tile)
        k[r0:r1, r0:] = tile

    # Mirror the strict lower triangle from the upper one, tile by tile.
    for r0 in range(0, m, _TILE):
        r1 = min(r0 + _TILE, m)
        k[r0:r1, :r0] = k[:r0, r0:r1].T
        diag_block = k[r0:r1, r0:r1]
        il = np.tril_indices(r1 - r0, k=-1)
        diag_block[il] = diag_block.T[il]

    nonzero = row_norms(block.values) > 0.0
    np.fill_diagonal(k, np.where(nonzero, np.float32(1.0), np.float32(0.0)))
    return SimilarityKernel(values=k, clipped=True)
