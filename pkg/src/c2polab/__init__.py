"""Trained C2PO 1-bit massive-MIMO precoding with norm-targeted training sets."""
__version__ = "0.1.0"

from .channel import Recipe, SystemConfig, TrainingSet, generate_training_set
from .errors import (ArgumentError, C2poLabError, GenerationStalledError, NotConvergedError,
                     NumericError, PreconditionError, TrainingDivergedError)
from .evaluator import LinkStats, SweepResult, error_floor, norm_sweep, simulate_ser
from .precoder import PrecoderParams, c2po_precode
from .trainer import TrainHyper, TrainResult, train

__all__ = [
    "Recipe", "SystemConfig", "TrainingSet", "generate_training_set",
    "ArgumentError", "C2poLabError", "GenerationStalledError", "NotConvergedError",
    "NumericError", "PreconditionError", "TrainingDivergedError",
    "LinkStats", "SweepResult", "error_floor", "norm_sweep", "simulate_ser",
    "PrecoderParams", "c2po_precode", "TrainHyper", "TrainResult", "train",
]
