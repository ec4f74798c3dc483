"""Manifold-regularized network training (ADMM-BP) at desk scale."""

from ._backend import BACKEND
from .admm import AdmmConfig, AdmmState, Trainer, TrainHistory, extract_features, train
from .errors import (
    ConfigError,
    InputError,
    ManifoldUnavailable,
    NumericError,
    SingularMatrixError,
    StmnError,
    TrainingDiverged,
)
from .manifold import ManifoldConfig, knn, lle_weights, project
from .net import LayerSpec, NetParams, backward, forward, init_params, sgd_step

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AdmmConfig",
    "AdmmState",
    "ConfigError",
    "InputError",
    "LayerSpec",
    "ManifoldConfig",
    "ManifoldUnavailable",
    "NetParams",
    "NumericError",
    "SingularMatrixError",
    "StmnError",
    "Trainer",
    "TrainHistory",
    "TrainingDiverged",
    "backward",
    "extract_features",
    "forward",
    "init_params",
    "knn",
    "lle_weights",
    "project",
    "sgd_step",
    "train",
]
