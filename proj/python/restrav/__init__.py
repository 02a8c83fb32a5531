"""Real vs. generated video detection from embedding-trajectory geometry."""

from ._restrav import (
    DEGENERATE_NORM,
    FEATURE_COUNT,
    Model,
    RestravError,
    auroc,
    average_precision,
    compute_signals,
    feature_names,
    feature_vector,
    load_embeddings,
    store_embeddings,
    train,
)

__all__ = [
    "DEGENERATE_NORM",
    "FEATURE_COUNT",
    "Model",
    "RestravError",
    "auroc",
    "average_precision",
    "compute_signals",
    "feature_names",
    "feature_vector",
    "load_embeddings",
    "store_embeddings",
    "train",
]
