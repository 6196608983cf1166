"""Parameter containers and layers built on the tensor primitives."""

from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = ["Parameter", "Module", "Linear", "Conv1d", "MLP", "sinusoidal_embedding", "ACTIVATIONS"]

ACTIVATIONS = {
    "relu": T.relu,
    "gelu": T.gelu,
    "silu": T.silu,
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
}


def Parameter(data, name=None):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


class Module:
    """Minimal parameter tree.

    Attributes holding a :class:`Tensor` with ``requires_grad`` or another
    :class:`Module` (or a list of modules) are discovered by
    :meth:`named_parameters` in attribute-insertion order.
    """

    def named_parameters(self, prefix=""):
        out = OrderedDict()
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(name + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def num_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return OrderedDict((k, v.data.copy()) for k, v in self.named_parameters().items())

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise T.ShapeError(f"{k}: expected shape {p.shape}, got {arr.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """Affine map over the last axis."""

    def __init__(self, in_features, out_features, rng, bias=True, zero_init=False):
        if zero_init:
            w = np.zeros((in_features, out_features))
        else:
            w = _uniform(rng, (in_features, out_features), in_features)
        self.weight = Parameter(w)
        self.bias = None
        if bias:
            b = np.zeros(out_features) if zero_init else _uniform(rng, (out_features,), in_features)
            self.bias = Parameter(b)

    def forward(self, x):
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = T.add(y, self.bias)
        return y


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, dilation=1):
        fan_in = in_channels * kernel_size
        self.weight = Parameter(_uniform(rng, (kernel_size, in_channels, out_channels), fan_in))
        self.bias = Parameter(_uniform(rng, (out_channels,), fan_in))
        self.dilation = dilation

    def forward(self, x):
        return T.conv1d(x, self.weight, self.bias, dilation=self.dilation)


class MLP(Module):
    """Two-layer perceptron: Linear -> activation -> Linear."""

    def __init__(self, in_features, hidden, out_features, rng, activation="silu", zero_last=False):
        self.fc1 = Linear(in_features, hidden, rng)
        self.fc2 = Linear(hidden, out_features, rng, zero_init=zero_last)
        self.activation = activation

    def forward(self, x):
        return self.fc2(ACTIVATIONS[self.activation](self.fc1(x)))


def sinusoidal_embedding(t, dim, base=10000.0):
    """Sinusoidal timestep features, shape ``(len(t), dim)``.

    First half sines, second half cosines, frequencies ``base**(-i/(dim/2))``.
    """
    if dim % 2:
        raise ValueError(f"embedding dim must be even, got {dim}")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = base ** (-np.arange(half) / half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)
