"""Scalable data-subset selection via partitioned facility-location
maximization with gain-proportional importance sampling."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    FeatureFormatError,
    InvalidInputError,
    SubselError,
)
from .features import (
    FeatureMatrix,
    SparseFeatureMatrix,
    TfidfConfig,
    build_tfidf,
    load_features,
    mean_pool,
    normalize_rows,
    save_features,
)
from .kernel import SimilarityKernel, cosine_kernel, kernel_memory_bytes
from .partition import (
    BudgetSplit,
    OrderingArtifact,
    PartitionPlan,
    build_orderings,
    load_artifact,
    make_partition,
    read_subset_file,
    sample_subset,
    save_artifact,
    select_orderings,
    split_budget,
    union_sample,
    write_subset_file,
)
from .sampling import SamplingDistribution, sample_without_replacement, taylor_softmax
from .session import (
    SessionConfig,
    SessionState,
    SubsetQuery,
    load_checkpoint,
    new_session,
    resample_steps,
)
from .submodular import (
    FacilityLocationMemo,
    GreedyResult,
    fl_evaluate,
    fl_gain,
    fl_update_memo,
    full_ordering,
    lazy_greedy,
    naive_greedy,
    stochastic_greedy,
    stochastic_sample_size,
)

__all__ = [
    "__version__",
    "SubselError",
    "InvalidInputError",
    "CapacityError",
    "FeatureFormatError",
    "FeatureMatrix",
    "SparseFeatureMatrix",
    "TfidfConfig",
    "build_tfidf",
    "mean_pool",
    "normalize_rows",
    "load_features",
    "save_features",
    "SimilarityKernel",
    "cosine_kernel",
    "kernel_memory_bytes",
    "FacilityLocationMemo",
    "GreedyResult",
    "fl_evaluate",
    "fl_gain",
    "fl_update_memo",
    "naive_greedy",
    "lazy_greedy",
    "stochastic_greedy",
    "stochastic_sample_size",
    "full_ordering",
    "SamplingDistribution",
    "taylor_softmax",
    "sample_without_replacement",
    "PartitionPlan",
    "BudgetSplit",
    "OrderingArtifact",
    "make_partition",
    "split_budget",
    "build_orderings",
    "select_orderings",
    "union_sample",
    "sample_subset",
    "save_artifact",
    "load_artifact",
    "write_subset_file",
    "read_subset_file",
    "SessionConfig",
    "SessionState",
    "SubsetQuery",
    "new_session",
    "load_checkpoint",
    "resample_steps",
]
