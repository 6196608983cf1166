"""Small reverse-mode autodiff engine sufficient to train the denoisers."""

from .nn import MLP, Conv1d, Linear, Module, Parameter, sinusoidal_embedding
from .optim import AdamState, adam_step
from .serialize import load_hyperparams, load_weights, save_weights
from .tensor import ShapeError, Tensor

__all__ = [
    "AdamState",
    "Conv1d",
    "Linear",
    "MLP",
    "Module",
    "Parameter",
    "ShapeError",
    "Tensor",
    "adam_step",
    "load_hyperparams",
    "load_weights",
    "save_weights",
    "sinusoidal_embedding",
]
