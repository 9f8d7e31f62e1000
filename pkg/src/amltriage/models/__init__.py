"""Triage classifiers, search and importance."""
from .core import (
    GbdtParams,
    GlmParams,
    ModelArtifact,
    RfParams,
    logloss,
    params_from_dict,
    predict,
    predict_margin,
    train,
)
from .search import FAMILIES, SearchResult, hyperparameter_search, permutation_importance, sample_params

__all__ = [
    "FAMILIES",
    "GbdtParams",
    "GlmParams",
    "ModelArtifact",
    "RfParams",
    "SearchResult",
    "hyperparameter_search",
    "logloss",
    "params_from_dict",
    "permutation_importance",
    "predict",
    "predict_margin",
    "sample_params",
    "train",
]
