"""Feature construction and validated storage.

Turns raw text corpora (TF-IDF) or externally produced embeddings into
L2-normalized float32 matrices that similarity kernels can consume, and
reads/writes the binary feature-matrix file format.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FeatureFormatError, InvalidInputError

_MAGIC = b"SUBSELFM"
_FORMAT_VERSION = 1
_DTYPE_F32 = 0
# magic(8) + version u32 + n u64 + d u32 + dtype u8 + normalized u8
_HEADER = struct.Struct("<8sIQIBB")

_NORM_TOL = 1e-5


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense per-sample feature vectors, float32, one row per sample."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise InvalidInputError(f"feature matrix must be 2-D, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidInputError(f"feature matrix must be at least 1x1, got {v.shape}")
        if not np.isfinite(v).all():
            raise InvalidInputError("feature matrix contains NaN or Inf")
        v = np.ascontiguousarray(v)
        object.__setattr__(self, "values", v)
        if self.normalized:
            norms = row_norms(v)
            bad = ~((np.abs(norms - 1.0) <= _NORM_TOL) | (norms == 0.0))
            if bad.any():
                raise InvalidInputError(
                    f"matrix flagged normalized but {int(bad.sum())} rows have "
                    f"non-unit norm (first: row {int(np.flatnonzero(bad)[0])})"
                )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def row_norms(values: np.ndarray) -> np.ndarray:
    """Per-row L2 norms, accumulated in float64."""
    return np.sqrt(np.einsum("ij,ij->i", values, values, dtype=np.float64))


def normalize_rows(m: FeatureMatrix) -> tuple[FeatureMatrix, np.ndarray]:
    """Divide every nonzero row by its L2 norm.

    Zero rows are left as zeros (dropping them would break index alignment
    with the corpus) and their indices are returned for reporting.
    """
    norms = row_norms(m.values)
    degenerate = np.flatnonzero(norms == 0.0)
    safe = np.where(norms == 0.0, 1.0, norms)
    vals = (m.values.astype(np.float64) / safe[:, None]).astype(np.float32)
    return FeatureMatrix(vals, normalized=True), degenerate


def mean_pool(token_embeddings: Sequence[Iterable[float]] | np.ndarray) -> np.ndarray:
    """Component-wise mean of a non-empty sequence of equal-length vectors."""
    try:
        arr = np.asarray(token_embeddings, dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"token embeddings are ragged: {exc}") from exc
    if arr.size == 0:
        raise InvalidInputError("mean_pool needs at least one token embedding")
    if arr.ndim != 2:
        raise InvalidInputError("token embeddings must all have the same dimension")
    return arr.mean(axis=0).astype(np.float32)


@dataclass(frozen=True)
class TfidfConfig:
    """Fixed smooth-IDF TF-IDF: idf(t) = ln((1+n)/(1+df(t))) + 1, L2 rows.

    Tokenization is lowercase + Unicode-whitespace split by default; changing
    it changes every downstream artifact, so treat it as part of the config
    fingerprint.
    """

    lowercase: bool = True
    min_df: int = 1

    def __post_init__(self):
        if self.min_df < 1:
            raise InvalidInputError(f"min_df must be >= 1, got {self.min_df}")

    def tokenize(self, document: str) -> list[str]:
        if self.lowercase:
            document = document.lower()
        return document.split()


@dataclass(frozen=True)
class SparseFeatureMatrix:
    """CSR-style rows of sorted (term index, weight) pairs, L2-normalized.

    Weights are kept in float64; they are rounded to the 32-bit storage
    format only when densified.
    """

    n: int
    vocab_size: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    vocabulary: tuple[str, ...] = field(repr=False)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def degenerate_rows(self) -> np.ndarray:
        """Indices of rows that lost every term (kept as all-zero rows)."""
        return np.flatnonzero(np.diff(self.indptr) == 0)

    def to_dense(self) -> FeatureMatrix:
        dense = np.zeros((self.n, self.vocab_size), dtype=np.float32)
        for i in range(self.n):
            cols, w = self.row(i)
            dense[i, cols] = w
        return FeatureMatrix(dense, normalized=True)


def build_tfidf(corpus: Sequence[str], config: TfidfConfig | None = None) -> SparseFeatureMatrix:
    """TF-IDF rows for a corpus of documents (one string per document).

    Terms occurring in fewer than ``min_df`` documents are dropped; documents
    left empty after filtering become zero rows flagged via degenerate_rows().
    """
    if config is None:
        config = TfidfConfig()
    if len(corpus) == 0:
        raise InvalidInputError("corpus is empty")
    n = len(corpus)
    if config.min_df > n:
        raise InvalidInputError(f"min_df={config.min_df} exceeds corpus size {n}")

    token_rows = [config.tokenize(doc) for doc in corpus]
    df: Counter[str] = Counter()
    for tokens in token_rows:
        df.update(set(tokens))

    vocabulary = tuple(sorted(t for t, c in df.items() if c >= config.min_df))
    term_id = {t: j for j, t in enumerate(vocabulary)}
    idf = np.array(
        [math.log((1.0 + n) / (1.0 + df[t])) + 1.0 for t in vocabulary], dtype=np.float64
    )

    indptr = np.zeros(n + 1, dtype=np.int64)
    all_indices: list[np.ndarray] = []
    all_data: list[np.ndarray] = []
    for i, tokens in enumerate(token_rows):
        counts = Counter(t for t in tokens if t in term_id)
        cols = np.array(sorted(term_id[t] for t in counts), dtype=np.int64)
        tf = np.array([counts[vocabulary[j]] for j in cols], dtype=np.float64)
        w = tf * idf[cols]
        norm = math.sqrt(float(np.dot(w, w)))
        if norm > 0.0:
            w = w / norm
        all_indices.append(cols)
        all_data.append(w)
        indptr[i + 1] = indptr[i] + len(cols)

    indices = np.concatenate(all_indices) if all_indices else np.zeros(0, dtype=np.int64)
    data = np.concatenate(all_data) if all_data else np.zeros(0, dtype=np.float64)
    return SparseFeatureMatrix(
        n=n,
        vocab_size=len(vocabulary),
        indptr=indptr,
        indices=indices,
        data=data,
        vocabulary=vocabulary,
    )


def save_features(m: FeatureMatrix, path: str | Path) -> None:
    """Write the binary feature-matrix format (little-endian float32)."""
    header = _HEADER.pack(
        _MAGIC, _FORMAT_VERSION, m.n, m.d, _DTYPE_F32, 1 if m.normalized else 0
    )
    body = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def load_features(path: str | Path) -> FeatureMatrix:
    """Read and validate a feature-matrix file written by save_features."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FeatureFormatError("file shorter than header", len(raw))
    magic, version, n, d, dtype, normalized = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise FeatureFormatError(f"bad magic {magic!r}", 0)
    if version != _FORMAT_VERSION:
        raise FeatureFormatError(f"unsupported version {version}", 8)
    if n < 1:
        raise FeatureFormatError("sample count must be >= 1", 12)
    if d < 1:
        raise FeatureFormatError("dimension must be >= 1", 20)
    if dtype != _DTYPE_F32:
        raise FeatureFormatError(f"unknown dtype code {dtype}", 24)
    if normalized not in (0, 1):
        raise FeatureFormatError(f"normalized flag must be 0 or 1, got {normalized}", 25)

    expected = n * d * 4
    body = raw[_HEADER.size :]
    if len(body) != expected:
        raise FeatureFormatError(
            f"expected {expected} value bytes, found {len(body)}",
            _HEADER.size + min(len(body), expected),
        )
    values = np.frombuffer(body, dtype="<f4").reshape(n, d)
    nan_mask = ~np.isfinite(values)
    if nan_mask.any():
        first = int(np.flatnonzero(nan_mask.ravel())[0])
        raise FeatureFormatError("non-finite value", _HEADER.size + first * 4)
    return FeatureMatrix(values.copy(), normalized=bool(normalized))
