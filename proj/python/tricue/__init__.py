"""Training-free anomaly detection over precomputed backbone features."""

from ._tricue import (
    ConfigError,
    Error,
    GaussianModel,
    ablate,
    ablated_pooled,
    attribute,
    coreset_subsample,
    evaluate,
    fit,
    fuse_maps,
    generate_synthetic,
    image_score_pc,
    kmeans2,
    minmax_normalize,
    nn_search,
    pro_auc,
    roc_auc,
    score,
)

__all__ = [
    "ConfigError",
    "Error",
    "GaussianModel",
    "ablate",
    "ablated_pooled",
    "attribute",
    "coreset_subsample",
    "evaluate",
    "fit",
    "fuse_maps",
    "generate_synthetic",
    "image_score_pc",
    "kmeans2",
    "minmax_normalize",
    "nn_search",
    "pro_auc",
    "roc_auc",
    "score",
]
