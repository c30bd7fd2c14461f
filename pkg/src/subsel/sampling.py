"""Gain-proportional sampling distributions.

Greedy gains become probabilities through a second-order Taylor expansion of
the exponential softmax, P_i proportional to 1 + g_i + g_i^2/2, which is
strictly positive for any real gain. Subsets are drawn without replacement
with the exponential-keys scheme: key_i = u_i^(1/P_i), keep the top `count`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SamplingDistribution:
    """Probabilities over block-local indices plus the gains they came from."""

    probabilities: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        g = np.asarray(self.gains, dtype=np.float64)
        if p.ndim != 1 or p.shape != g.shape:
            raise InvalidInputError("probabilities and gains must be aligned 1-D")
        if p.size == 0:
            raise InvalidInputError("distribution must cover at least one item")
        if p.min() <= 0.0:
            raise InvalidInputError("probabilities must be strictly positive")
        if abs(float(p.sum()) - 1.0) > _SUM_TOL:
            raise InvalidInputError(f"probabilities sum to {float(p.sum())!r}, not 1")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "gains", g)

    def __len__(self) -> int:
        return len(self.probabilities)


def taylor_weights(gains: np.ndarray) -> np.ndarray:
    """Unnormalized weights 1 + g + g^2/2 = ((g+1)^2 + 1)/2 > 0."""
    g = np.asarray(gains, dtype=np.float64)
    return 1.0 + g + 0.5 * g * g


def taylor_softmax(gains) -> SamplingDistribution:
    """Normalize Taylor weights of the gains into a sampling distribution."""
    g = np.asarray(gains, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise InvalidInputError("gains must be a non-empty 1-D sequence")
    if not np.isfinite(g).all():
        raise InvalidInputError("gains contain NaN or Inf")
    w = taylor_weights(g)
    return SamplingDistribution(probabilities=w / w.sum(), gains=g)


def sample_without_replacement(
    dist: SamplingDistribution, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw `count` distinct indices, returned sorted ascending.

    One uniform is drawn per item in index order, so the result depends only
    on the generator state, never on internal iteration order. Keys are
    compared as log(u)/P, which orders identically to u^(1/P) without
    underflow for very small probabilities.
    """
    m = len(dist)
    count = int(count)
    if not 1 <= count <= m:
        raise InvalidInputError(f"sample count {count} out of range 1..{m}")
    u = rng.random(m)
    with np.errstate(divide="ignore"):
        keys = np.log(u) / dist.probabilities
    top = np.lexsort((np.arange(m), -keys))[:count]
    return np.sort(top).astype(np.int64)
