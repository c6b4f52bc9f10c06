"""Generative sequence models: n-gram tables and recurrent networks."""

from .architecture import Architecture, ArchitectureSpace, Hyperparams, sample_architecture
from .lstm import NetworkModel, NumericalError, load_checkpoint, save_checkpoint
from .ngram import NGramModel
from .training import AdamState, TrainResult, adam_step, train_model

__all__ = [
    "AdamState",
    "Architecture",
    "ArchitectureSpace",
    "Hyperparams",
    "NGramModel",
    "NetworkModel",
    "NumericalError",
    "TrainResult",
    "adam_step",
    "load_checkpoint",
    "sample_architecture",
    "save_checkpoint",
    "train_model",
]
