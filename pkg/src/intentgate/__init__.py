"""Uncertainty-routed intent classification with an LLM fallback.

A small softmax classifier answers the easy traffic; a reconstruction-based
uncertainty score decides, per utterance, whether to escalate to a language
model that picks among the classifier's top candidates or declares the
utterance out of scope.
"""

from .classifier import ClassifierModel, TopKPrediction, TrainingConfig, focal_loss, predict_topk, train
from .domain import (
    DEFAULT_OOS_TOKEN,
    EmbeddedUtterance,
    IntentCatalog,
    IntentDef,
    LabeledDataset,
    load_catalog,
    load_dataset,
    normalize_embedding,
    save_catalog,
    save_dataset,
    validate_catalog,
)
from .errors import BackendError, ConfigError, DataError, GateError
from .pipeline import ClassifyResponse, Pipeline, PipelineConfig, load_config, run_benchmark
from .routing import NAMED_THRESHOLDS, RoutingStrategy, resolve_strategy, route
from .scoring import NnkDictionary, fit_nnk, nnk_code, nnls, score

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "ClassifierModel",
    "ClassifyResponse",
    "ConfigError",
    "DataError",
    "DEFAULT_OOS_TOKEN",
    "EmbeddedUtterance",
    "GateError",
    "IntentCatalog",
    "IntentDef",
    "LabeledDataset",
    "NAMED_THRESHOLDS",
    "NnkDictionary",
    "Pipeline",
    "PipelineConfig",
    "RoutingStrategy",
    "TopKPrediction",
    "TrainingConfig",
    "fit_nnk",
    "focal_loss",
    "load_catalog",
    "load_config",
    "load_dataset",
    "nnk_code",
    "nnls",
    "normalize_embedding",
    "predict_topk",
    "resolve_strategy",
    "route",
    "run_benchmark",
    "save_catalog",
    "save_dataset",
    "score",
    "train",
    "validate_catalog",
]
