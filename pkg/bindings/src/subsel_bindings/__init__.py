"""In-process bindings for the subsel selection engine.

A thin veneer for training pipelines: select / sample / Session delegate to
the engine's own entry points, so outputs are byte-identical to the CLI under
equal config and seed. Only indices, gains, and probabilities cross the
binding boundary; similarity kernels never leave the engine.
"""

from ._handles import (
    ArtifactHandle,
    BindingError,
    ClosedHandleError,
    Session,
    load_artifact,
    sample,
    select,
)

import subsel as _engine

__version__ = _engine.__version__

__all__ = [
    "__version__",
    "ArtifactHandle",
    "Session",
    "select",
    "sample",
    "load_artifact",
    "BindingError",
    "ClosedHandleError",
]
