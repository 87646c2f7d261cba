"""Minimal reverse-mode differentiable core used by the parsers."""

from .cells import LSTM, StackRNN
from .gradcheck import check_params, numerical_gradient, relative_error
from .optim import adagrad_step, clip_by_global_norm, global_norm
from .params import ModelConfig, ParamStore, glorot
from .tensor import Tensor, masked_softmax, no_grad

__all__ = [
    "LSTM",
    "ModelConfig",
    "ParamStore",
    "StackRNN",
    "Tensor",
    "adagrad_step",
    "check_params",
    "clip_by_global_norm",
    "global_norm",
    "glorot",
    "masked_softmax",
    "no_grad",
    "numerical_gradient",
    "relative_error",
]
