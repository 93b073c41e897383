"""Data-driven forecasters trained from scratch in numpy."""

from .adam import AdamHyper, AdamState, adam_step
from .forecast import (
    KINDS,
    ForecastModel,
    SupervisedSet,
    TrainingConfig,
    TrainingLog,
    gradient_check,
    load_model,
    make_supervised,
    persistence_forecast,
    rollout,
    save_model,
    supervised_for,
    train,
    with_seed,
)
from .networks import DenseNet, LSTMNet

__all__ = [
    "AdamHyper", "AdamState", "adam_step", "KINDS", "ForecastModel", "SupervisedSet", "TrainingConfig",
    "TrainingLog", "gradient_check", "load_model", "make_supervised", "persistence_forecast", "rollout",
    "save_model", "supervised_for", "train", "with_seed", "DenseNet", "LSTMNet",
]
