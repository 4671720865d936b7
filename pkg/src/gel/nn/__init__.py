"""Minimal differentiable tensor ops, layers, optimizer, and gradient oracle."""

from .tensor import NumericalError, Tensor, no_grad, parameter, set_debug_checks
from .layers import (Conv1d, Conv2d, Deconv2d, Flatten, Linear, MaxPool1d,
                     ReLU, Reshape, Sequential, ShapeError, Sigmoid)
from .optim import ParamStore, adam_step
from .gradcheck import grad_check, input_grad_check
from . import ops
from .serialize import load_weights, save_weights

__all__ = [
    "Tensor", "no_grad", "parameter", "set_debug_checks", "NumericalError",
    "Conv1d", "Conv2d", "Deconv2d", "Flatten", "Linear", "MaxPool1d",
    "ReLU", "Reshape", "Sequential", "ShapeError", "Sigmoid",
    "ParamStore", "adam_step", "grad_check", "input_grad_check", "ops",
    "load_weights", "save_weights",
]
