"""Selection sessions: warm-start, ordering construction, periodic refresh.

A session tracks an external trainer's step counter. Before the warm-start
boundary W it signals "train on the full corpus"; at t = W it builds the
ordering artifact and draws the first subset; afterwards it redraws a subset
at every step divisible by the refresh interval R. Draw seeds are derived
from (master seed, step), so a reloaded session continues identically.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .features import FeatureMatrix, load_features
from .partition import (
    OrderingArtifact,
    build_orderings,
    load_artifact,
    read_subset_file,
    sample_subset,
    save_artifact,
    select_orderings,
    write_subset_file,
)
from .seeds import KIND_SESSION_DRAW, derive_seed

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "subsel-session-checkpoint"
CHECKPOINT_VERSION = 1

# Reference defaults for the large-corpus setting this engine targets.
DEFAULT_SUBSET_FRACTION = 0.25
DEFAULT_REFRESH_INTERVAL = 25_000
DEFAULT_WARM_START_STEPS = 80_000
DEFAULT_PARALLEL_BLOCKS = 100
DEFAULT_EPSILON = 0.01

PHASE_WARM_START = "warm_start"
PHASE_SUBSET = "subset_training"


@dataclass(frozen=True)
class SessionConfig:
    total_steps: int
    num_blocks: int
    seed: int
    warm_start_steps: int = DEFAULT_WARM_START_STEPS
    refresh_interval: int = DEFAULT_REFRESH_INTERVAL
    subset_size: int | None = None
    subset_fraction: float | None = None
    epsilon: float = DEFAULT_EPSILON
    workers: int = DEFAULT_PARALLEL_BLOCKS
    memory_budget: int | None = None

    def __post_init__(self):
        if self.total_steps < 1:
            raise InvalidInputError("total_steps must be >= 1")
        if not 0 <= self.warm_start_steps < self.total_steps:
            raise InvalidInputError(
                f"warm_start_steps must satisfy 0 <= W < T, got W={self.warm_start_steps}"
            )
        if not 1 <= self.refresh_interval <= self.total_steps:
            raise InvalidInputError(
                f"refresh_interval must satisfy 1 <= R <= T, got R={self.refresh_interval}"
            )
        if self.subset_size is not None and self.subset_fraction is not None:
            raise InvalidInputError("set subset_size or subset_fraction, not both")
        if self.subset_size is None and self.subset_fraction is None:
            object.__setattr__(self, "subset_fraction", DEFAULT_SUBSET_FRACTION)
        if self.subset_size is not None and self.subset_size < self.num_blocks:
            raise InvalidInputError(
                f"subset_size {self.subset_size} below block count {self.num_blocks}"
            )
        if self.subset_fraction is not None and not 0.0 < self.subset_fraction <= 1.0:
            raise InvalidInputError(
                f"subset_fraction must be in (0, 1], got {self.subset_fraction}"
            )
        if self.num_blocks < 1:
            raise InvalidInputError("num_blocks must be >= 1")
        if self.seed < 0:
            raise InvalidInputError("seed must be non-negative")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidInputError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")

    def resolve_subset_size(self, n: int) -> int:
        k = self.subset_size if self.subset_size is not None else math.floor(
            self.subset_fraction * n
        )
        if not self.num_blocks <= k <= n:
            raise InvalidInputError(
                f"subset size {k} out of range {self.num_blocks}..{n}"
            )
        return int(k)

    def to_dict(self) -> dict:
        return {
            "total_steps": self.total_steps,
            "num_blocks": self.num_blocks,
            "seed": self.seed,
            "warm_start_steps": self.warm_start_steps,
            "refresh_interval": self.refresh_interval,
            "subset_size": self.subset_size,
            "subset_fraction": self.subset_fraction,
            "epsilon": self.epsilon,
            "workers": self.workers,
            "memory_budget": self.memory_budget,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SessionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise InvalidInputError(f"unknown session config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InvalidInputError(f"incomplete session config: {exc}") from exc


def resample_steps(config: SessionConfig) -> list[int]:
    """All steps at which a subset is (re)drawn: {W} plus multiples of R in [W, T]."""
    w, r, t = config.warm_start_steps, config.refresh_interval, config.total_steps
    first = ((w + r - 1) // r) * r
    steps = {w, *range(first, t + 1, r)}
    return sorted(steps)


@dataclass(frozen=True)
class SubsetQuery:
    """What the trainer should train on right now."""

    phase: str
    indices: np.ndarray | None  # None means "use the full corpus"


class SessionState:
    """Single-owner state machine driving subset selection over time."""

    def __init__(
        self,
        config: SessionConfig,
        *,
        features: FeatureMatrix | None = None,
        features_path: str | None = None,
        artifact: OrderingArtifact | None = None,
        _t: int = 0,
        _subset: np.ndarray | None = None,
        _subset_step: int | None = None,
    ):
        self.config = config
        self.features = features
        self.features_path = features_path
        self.artifact: OrderingArtifact | None = None
        self.t = _t
        self.subset = _subset
        self.subset_step = _subset_step
        if artifact is not None:
            self._attach_artifact(artifact)
        self._n = self._corpus_size()
        self.k = config.resolve_subset_size(self._n)

    def _corpus_size(self) -> int:
        if self.features is not None:
            return self.features.n
        if self.artifact is not None:
            return self.artifact.plan.n
        raise InvalidInputError("session needs features or a prebuilt artifact")

    def _attach_artifact(self, artifact: OrderingArtifact) -> None:
        cfg = self.config
        if artifact.plan.num_blocks != cfg.num_blocks:
            raise InvalidInputError(
                f"artifact has {artifact.plan.num_blocks} blocks, config wants "
                f"{cfg.num_blocks}"
            )
        if artifact.master_seed != cfg.seed:
            raise InvalidInputError(
                f"artifact was built with seed {artifact.master_seed}, config has "
                f"{cfg.seed}"
            )
        if self.features is not None and artifact.plan.n != self.features.n:
            raise InvalidInputError("artifact and features disagree on corpus size")
        self.artifact = artifact

    @property
    def phase(self) -> str:
        return PHASE_WARM_START if self.t < self.config.warm_start_steps else PHASE_SUBSET

    def query_subset(self) -> SubsetQuery:
        """Current training signal: full corpus during warm-start, else S_t."""
        if self.phase == PHASE_WARM_START:
            return SubsetQuery(phase=PHASE_WARM_START, indices=None)
        return SubsetQuery(phase=PHASE_SUBSET, indices=self.subset)

    def _ensure_artifact(self) -> None:
        if self.artifact is not None:
            return
        if self.features is None:
            raise InvalidInputError(
                "cannot build orderings: session has no feature source"
            )
        cfg = self.config
        self._attach_artifact(
            select_orderings(
                self.features,
                cfg.num_blocks,
                epsilon=cfg.epsilon,
                master_seed=cfg.seed,
                workers=cfg.workers,
                memory_budget=cfg.memory_budget,
            )
        )

    def _apply_event(self, step: int) -> None:
        self._ensure_artifact()
        draw_seed = derive_seed(self.config.seed, KIND_SESSION_DRAW, step)
        self.subset = sample_subset(self.artifact, self.k, draw_seed)
        self.subset_step = step
        log.debug("subset of %d drawn at step %d", self.k, step)

    def advance(self, steps: int = 1) -> list[int]:
        """Move the step counter forward, applying any crossed resample events.

        Returns the event steps processed, in order.
        """
        if steps < 0:
            raise InvalidInputError("cannot advance by a negative step count")
        target = self.t + int(steps)
        if target > self.config.total_steps:
            raise InvalidInputError(
                f"cannot advance to step {target} past total_steps="
                f"{self.config.total_steps}"
            )
        events = [e for e in resample_steps(self.config) if self.t < e <= target]
        for e in events:
            self._apply_event(e)
        self.t = target
        return events

    def refresh_features(self, new_features: FeatureMatrix, rebuild: bool = False) -> None:
        """Swap the feature source; optionally rebuild the orderings now.

        Without `rebuild`, an existing artifact keeps serving draws; new
        features only affect orderings built afterwards.
        """
        if self.features is not None:
            if (new_features.n, new_features.d) != (self.features.n, self.features.d):
                raise InvalidInputError(
                    f"replacement features must be {self.features.n}x{self.features.d}, "
                    f"got {new_features.n}x{new_features.d}"
                )
        elif new_features.n != self._n:
            raise InvalidInputError(
                f"replacement features must cover {self._n} samples, got {new_features.n}"
            )
        self.features = new_features
        self.features_path = None
        if rebuild and self.artifact is not None:
            cfg = self.config
            plan = self.artifact.plan
            self.artifact = None
            self._attach_artifact(
                build_orderings(
                    new_features,
                    plan,
                    epsilon=cfg.epsilon,
                    master_seed=cfg.seed,
                    workers=cfg.workers,
                    memory_budget=cfg.memory_budget,
                )
            )

    def save_checkpoint(
        self,
        path: str | Path,
        *,
        artifact_path: str | Path | None = None,
        subset_path: str | Path | None = None,
    ) -> None:
        """Write checkpoint JSON plus sidecar artifact/subset files."""
        path = Path(path)
        if self.artifact is not None:
            artifact_path = Path(
                artifact_path if artifact_path is not None
                else path.with_name(path.name + ".artifact.json")
            )
            save_artifact(self.artifact, artifact_path)
        else:
            artifact_path = None
        if self.subset is not None:
            subset_path = Path(
                subset_path if subset_path is not None
                else path.with_name(path.name + ".subset.txt")
            )
            write_subset_file(self.subset, subset_path)
        else:
            subset_path = None
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "t": self.t,
            "phase": self.phase,
            "artifact_path": str(artifact_path) if artifact_path else None,
            "subset_path": str(subset_path) if subset_path else None,
            "subset_step": self.subset_step,
            "features_path": self.features_path,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")


def new_session(source, config: SessionConfig) -> SessionState:
    """Start a session at t=0 from features or from a prebuilt artifact.

    `source` may be a FeatureMatrix, an OrderingArtifact, or a path to either
    file format (sniffed by content). With W=0 the orderings are built and the
    first subset drawn immediately.
    """
    features = None
    features_path = None
    artifact = None
    if isinstance(source, FeatureMatrix):
        features = source
    elif isinstance(source, OrderingArtifact):
        artifact = source
    elif isinstance(source, (str, Path)):
        if _looks_like_feature_file(source):
            features = load_features(source)
            features_path = str(source)
        else:
            artifact = load_artifact(source)
    else:
        raise InvalidInputError(f"cannot start a session from {type(source).__name__}")
    state = SessionState(
        config, features=features, features_path=features_path, artifact=artifact
    )
    if config.warm_start_steps == 0:
        state._apply_event(0)
    return state


def _looks_like_feature_file(path: str | Path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(8) == b"SUBSELFM"


def load_checkpoint(
    path: str | Path, *, features: FeatureMatrix | None = None,
    features_path: str | None = None,
) -> SessionState:
    """Rebuild a session from a checkpoint; future draws continue identically."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path} is not a session checkpoint")
    config = SessionConfig.from_dict(doc["config"])
    artifact = load_artifact(doc["artifact_path"]) if doc.get("artifact_path") else None
    subset = (
        read_subset_file(doc["subset_path"]) if doc.get("subset_path") else None
    )
    feats_path = features_path or doc.get("features_path")
    if features is None and feats_path:
        features = load_features(feats_path)
    return SessionState(
        config,
        features=features,
        features_path=feats_path,
        artifact=artifact,
        _t=int(doc["t"]),
        _subset=subset,
        _subset_step=doc.get("subset_step"),
    )
