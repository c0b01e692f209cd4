"""Parameter containers built on :mod:`hift.tensor`."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Parameter


class Module:
    """Attribute-walking parameter container.

    Parameters, sub-modules and lists of sub-modules stored as attributes are
    discovered in attribute order, so names are stable across runs.
    """

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def assign_names(self):
        for name, p in self.named_parameters():
            p.name = name
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch; missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.data.dtype)

    def cast(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = p.grad.astype(dtype)
        return self


def kaiming(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Linear(Module):
    """``x @ W + b`` over the last axis; equivalent to a 1x1 convolution."""

    def __init__(self, d_in, d_out, rng, bias=True, scale=None):
        std = np.sqrt(1.0 / d_in) if scale is None else scale
        self.weight = Parameter(rng.standard_normal((d_in, d_out)) * std)
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim):
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias)


class FFN(Module):
    """Two-layer perceptron with a ReLU in between."""

    def __init__(self, dim, hidden, rng, d_out=None):
        self.fc1 = Linear(dim, hidden, rng, scale=np.sqrt(2.0 / dim))
        self.fc2 = Linear(hidden, dim if d_out is None else d_out, rng)

    def __call__(self, x):
        return self.fc2(T.relu(self.fc1(x)))
