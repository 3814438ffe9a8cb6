"""Collaborative residual metric learning for implicit feedback.

Item-space recommenders built from interaction signals: a closed-form
linear autoencoder, a truncated-SVD graph filter, and the CoRML hybrid
model whose hollow symmetric nonnegative item weights are trained with
ADMM. Ships with deterministic data splitting, top-K ranking metrics
(NDCG/MRR/novelty), a distance-geometry analysis layer, and a CLI.
"""

from .errors import (
    ChecksumError,
    ConvergenceWarning,
    CormlError,
    DataFormatError,
    FactorizationError,
    TruncatedFileError,
    UsageError,
    VersionMismatchError,
)
from .sparse_core import (
    InteractionMatrix,
    degree_power,
    gram,
    scale_rows_cols,
    sparsify,
    spmm,
    to_canonical_csr,
)
from .geometry import (
    MetricWeight,
    SignalFeatureSpace,
    distance_residual,
    gershgorin_intervals,
    mahalanobis_distance_sq,
    preference_residual,
    preference_scores,
    psd_completion_omega,
)
from .signal_models import (
    EaseModel,
    GfcfModel,
    GraphFilterFactor,
    build_G,
    fit_ease,
    score_gfcf,
    truncated_svd,
)
from .solver import (
    AdmmState,
    CoRMLHyperparams,
    CoRMLModel,
    admm_dual_step,
    admm_h_step,
    admm_z_step,
    approx_ranking_weights,
    build_h_step_cache,
    compute_phi,
    corml_loss,
    exact_ranking_weights,
    fit_corml,
    hybrid_scores,
    lyapunov_symmetrize,
)
from .evaluation import (
    EvalReport,
    RankedList,
    dataset_hash,
    evaluate,
    mrr_at_k,
    ndcg_at_k,
    novelty_at_k,
    rank_topk,
)
from .dataio import (
    IdIndex,
    ParseResult,
    SplitDataset,
    file_hash,
    load_model,
    parse_interactions,
    read_split_dir,
    save_model,
    split,
    write_split_dir,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmState",
    "ChecksumError",
    "ConvergenceWarning",
    "CoRMLHyperparams",
    "CoRMLModel",
    "CormlError",
    "DataFormatError",
    "EaseModel",
    "EvalReport",
    "FactorizationError",
    "GfcfModel",
    "GraphFilterFactor",
    "IdIndex",
    "InteractionMatrix",
    "MetricWeight",
    "ParseResult",
    "RankedList",
    "SignalFeatureSpace",
    "SplitDataset",
    "TruncatedFileError",
    "UsageError",
    "VersionMismatchError",
    "admm_dual_step",
    "admm_h_step",
    "admm_z_step",
    "approx_ranking_weights",
    "build_G",
    "build_h_step_cache",
    "compute_phi",
    "corml_loss",
    "dataset_hash",
    "degree_power",
    "distance_residual",
    "evaluate",
    "exact_ranking_weights",
    "file_hash",
    "fit_corml",
    "fit_ease",
    "gershgorin_intervals",
    "gram",
    "hybrid_scores",
    "load_model",
    "lyapunov_symmetrize",
    "mahalanobis_distance_sq",
    "mrr_at_k",
    "ndcg_at_k",
    "novelty_at_k",
    "parse_interactions",
    "preference_residual",
    "preference_scores",
    "psd_completion_omega",
    "rank_topk",
    "read_split_dir",
    "save_model",
    "scale_rows_cols",
    "score_gfcf",
    "sparsify",
    "split",
    "spmm",
    "to_canonical_csr",
    "truncated_svd",
    "write_split_dir",
]
