"""Training loop, optimizers, evaluation and benchmarking."""

from .config import TrainConfig
from .optim import SGD, Adam, make_optimizer
from .trainer import (
    BenchResult,
    TrainReport,
    batch_indices,
    bench,
    evaluate,
    predict,
    save_training_state,
    train,
    zero_flow_epe,
)

__all__ = [
    "TrainConfig", "SGD", "Adam", "make_optimizer", "BenchResult", "TrainReport", "batch_indices",
    "bench", "evaluate", "predict", "save_training_state", "train", "zero_flow_epe",
]
