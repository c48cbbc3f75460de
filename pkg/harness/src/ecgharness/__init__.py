"""Toy-scale two-stage training harness built on the ecgpaper toolkit."""
from .config import Checkpoint, TrainConfig
from .data import INPUT_HEIGHT, INPUT_WIDTH, ImageSet, class_weights, load_dataset
from .errors import (Divergence, EmptyPool, HarnessError, MissingFolds,
                     ShapeMismatch)
from .model import SmallConvNet
from .train import (EarlyStopper, bce_loss, fit, lenient_macro_auroc,
                    predict_ensemble, train_stage1, train_stage2, write_history)

__all__ = [
    "Checkpoint", "TrainConfig",
    "INPUT_HEIGHT", "INPUT_WIDTH", "ImageSet", "class_weights", "load_dataset",
    "Divergence", "EmptyPool", "HarnessError", "MissingFolds", "ShapeMismatch",
    "SmallConvNet",
    "EarlyStopper", "bce_loss",
    "fit", "lenient_macro_auroc", "predict_ensemble",
    "train_stage1", "train_stage2", "write_history",
]
