"""Minimal reverse-mode differentiable engine on numpy arrays."""

from . import functional
from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    Flatten,
    MaxPool1d,
    Module,
    ModuleGroup,
    ReLU,
    Sequential,
    Sigmoid,
    Softmax,
    Upsample,
    build_network,
    count_parameters,
    output_shape,
    trace_shapes,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, no_grad, parameter
from .training import PlateauSchedule, TrainConfig, TrainResult, training_loop

__all__ = [
    "Adam",
    "AdamState",
    "BatchNorm1d",
    "Conv1d",
    "Dense",
    "Flatten",
    "MaxPool1d",
    "Module",
    "ModuleGroup",
    "PlateauSchedule",
    "ReLU",
    "Sequential",
    "Sigmoid",
    "Softmax",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "Upsample",
    "adam_step",
    "build_network",
    "count_parameters",
    "functional",
    "no_grad",
    "output_shape",
    "parameter",
    "trace_shapes",
    "training_loop",
]
