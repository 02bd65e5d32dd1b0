"""Positive-unlabeled learning with locally purified state tensor networks."""

__version__ = "0.1.0"

from .embedding import BasisSpec, PreprocessSpec, embed, embed_local, fit_preprocess
from .model import PulModel, classify, load_model, save_model
from .network import LpsNetwork, init_network, log_frobenius, log_norm, log_norms
from .selection import select_models
from .training import TrainConfig, train_ensemble, train_model

__all__ = [
    "BasisSpec", "PreprocessSpec", "embed", "embed_local", "fit_preprocess",
    "PulModel", "classify", "load_model", "save_model",
    "LpsNetwork", "init_network", "log_frobenius", "log_norm", "log_norms",
    "select_models", "TrainConfig", "train_ensemble", "train_model",
]
