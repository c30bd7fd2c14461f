"""Handle types and the select/sample/session entry points."""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import Mapping

import numpy as np

import subsel
from subsel import (
    FeatureMatrix,
    InvalidInputError,
    OrderingArtifact,
    SessionConfig,
)
from subsel.partition import default_num_blocks
from subsel.session import SessionState


class BindingError(RuntimeError):
    """Raised for misuse of the binding layer itself."""


class ClosedHandleError(BindingError):
    """An operation touched a handle that was already closed."""


class _BoundHandle:
    """Owns one engine object; invalidated exactly once by close()."""

    _closed = False

    def close(self) -> None:
        if self._closed:
            raise ClosedHandleError(f"{type(self).__name__} is already closed")
        self._closed = True
        self._drop()

    def _drop(self) -> None:
        raise NotImplementedError

    def _check_open(self) -> None:
        if self._closed:
            raise ClosedHandleError(f"{type(self).__name__} is closed")

    def __enter__(self):
        self._check_open()
        return self

    def __exit__(self, *exc_info):
        if not self._closed:
            self.close()
        return False


def _as_feature_matrix(features) -> FeatureMatrix:
    """Engine matrix from an array or a feature file path.

    float32 C-contiguous arrays are wrapped zero-copy; anything else is
    converted with a warning.
    """
    if isinstance(features, FeatureMatrix):
        return features
    if isinstance(features, (str, Path)):
        return subsel.load_features(features)
    arr = np.asarray(features)
    if arr.dtype != np.float32 or not arr.flags.c_contiguous:
        warnings.warn(
            "copying features: expected float32 C-contiguous, got "
            f"{arr.dtype} (contiguous={arr.flags.c_contiguous})",
            stacklevel=3,
        )
    try:
        return FeatureMatrix(arr)
    except InvalidInputError as exc:
        raise ValueError(str(exc)) from exc


class ArtifactHandle(_BoundHandle):
    """Opaque reference to an ordering artifact held by the engine."""

    def __init__(self, artifact: OrderingArtifact):
        self._artifact = artifact

    def _drop(self) -> None:
        self._artifact = None

    @property
    def corpus_size(self) -> int:
        self._check_open()
        return self._artifact.plan.n

    @property
    def num_blocks(self) -> int:
        self._check_open()
        return self._artifact.plan.num_blocks

    @property
    def fingerprint(self) -> str:
        self._check_open()
        return self._artifact.fingerprint

    def block_orderings(self) -> list[dict]:
        """Per-block indices, gains, and probabilities (copies)."""
        self._check_open()
        return [
            {
                "block_id": block.block_id,
                "global_indices": block.order_global.tolist(),
                "gains": block.gains.tolist(),
                "probabilities": block.distribution.probabilities[
                    block.order_local
                ].tolist(),
            }
            for block in self._artifact.blocks
        ]

    def save(self, path) -> None:
        """Write the artifact JSON exactly as the CLI would."""
        self._check_open()
        subsel.save_artifact(self._artifact, path)


def select(
    features,
    *,
    seed: int,
    partitions: int | None = None,
    epsilon: float = 0.01,
    workers: int = 1,
    memory_budget: int | None = None,
) -> ArtifactHandle:
    """Build per-block orderings; mirrors the CLI `select` subcommand."""
    fm = _as_feature_matrix(features)
    num_blocks = partitions if partitions else default_num_blocks(fm.n)
    artifact = subsel.select_orderings(
        fm,
        num_blocks,
        epsilon=epsilon,
        master_seed=seed,
        workers=workers,
        memory_budget=memory_budget,
    )
    return ArtifactHandle(artifact)


def load_artifact(path) -> ArtifactHandle:
    """Open an artifact JSON written by the CLI or by ArtifactHandle.save."""
    return ArtifactHandle(subsel.load_artifact(path))


def sample(
    artifact: ArtifactHandle,
    *,
    seed: int,
    k: int | None = None,
    fraction: float | None = None,
) -> list[int]:
    """Draw a subset; mirrors the CLI `sample` subcommand (sorted indices)."""
    if not isinstance(artifact, ArtifactHandle):
        raise BindingError("sample() needs an ArtifactHandle from select()")
    artifact._check_open()
    if (k is None) == (fraction is None):
        raise ValueError("pass exactly one of k or fraction")
    n = artifact._artifact.plan.n
    if k is None:
        k = int(fraction * n)
    try:
        subset = subsel.sample_subset(artifact._artifact, int(k), int(seed))
    except InvalidInputError as exc:
        raise ValueError(str(exc)) from exc
    return subset.tolist()


class Session(_BoundHandle):
    """Session handle mirroring the CLI `session` subcommand.

    Construct from a config mapping (same keys as the CLI's config JSON)
    plus features (array or path) or a prebuilt artifact handle.
    """

    def __init__(self, config: Mapping, features=None, artifact: ArtifactHandle | None = None):
        try:
            cfg = SessionConfig.from_dict(dict(config))
        except InvalidInputError as exc:
            raise ValueError(str(exc)) from exc
        if (features is None) == (artifact is None):
            raise BindingError("pass exactly one of features or artifact")
        if artifact is not None:
            artifact._check_open()
            source = artifact._artifact
        elif isinstance(features, (str, Path)):
            source = str(features)
        else:
            source = _as_feature_matrix(features)
        try:
            self._state: SessionState = subsel.new_session(source, cfg)
        except InvalidInputError as exc:
            raise ValueError(str(exc)) from exc

    def _drop(self) -> None:
        self._state = None

    @property
    def step(self) -> int:
        self._check_open()
        return self._state.t

    @property
    def phase(self) -> str:
        self._check_open()
        return self._state.phase

    def resample_steps(self) -> list[int]:
        self._check_open()
        return subsel.resample_steps(self._state.config)

    def advance(self, steps: int = 1) -> list[int]:
        """Advance the step counter; returns resample steps crossed."""
        self._check_open()
        try:
            return self._state.advance(steps)
        except InvalidInputError as exc:
            raise ValueError(str(exc)) from exc

    def query(self) -> tuple[str, list[int] | None]:
        """(phase, subset indices); indices None means train on everything."""
        self._check_open()
        result = self._state.query_subset()
        indices = None if result.indices is None else result.indices.tolist()
        return result.phase, indices

    def refresh_features(self, features, rebuild: bool = False) -> None:
        self._check_open()
        try:
            self._state.refresh_features(_as_feature_matrix(features), rebuild=rebuild)
        except InvalidInputError as exc:
            raise ValueError(str(exc)) from exc

    def save_checkpoint(self, path) -> None:
        self._check_open()
        self._state.save_checkpoint(path)
