"""Parameters, seeded initialization and a small module container."""

from __future__ import annotations

import hashlib
import math

import numpy as np

from . import ops
from .core import Tensor

INITS = ("kaiming-uniform", "zeros", "ones")


class Parameter(Tensor):
    """A trainable tensor with a deterministic, name-keyed initializer."""

    __slots__ = ("name", "init", "fan_in")

    def __init__(self, shape, init="kaiming-uniform", fan_in=None):
        if init not in INITS:
            raise ValueError(f"unknown init {init!r}")
        super().__init__(np.zeros(shape), requires_grad=True, op="parameter")
        self.name = None
        self.init = init
        self.fan_in = fan_in

    def initialize(self, seed, key=None):
        if self.init == "zeros":
            self.data[...] = 0.0
        elif self.init == "ones":
            self.data[...] = 1.0
        else:
            fan_in = self.fan_in or int(np.prod(self.shape[1:]))
            bound = math.sqrt(6.0 / fan_in)
            self.data[...] = param_rng(seed, key or self.name).uniform(-bound, bound, self.shape)
        self.grad = None


def param_rng(seed, name):
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    words = np.frombuffer(digest, dtype="<u4").tolist()
    return np.random.default_rng(words)


class Module:
    """Container whose Parameters and child Modules are found by attribute walk."""

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={missing} extra={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data[...] = arr

    def reset_parameters(self, seed, namespace=""):
        """Initialize every parameter from (seed, namespace/name)."""
        seen = set()
        for name, p in self.named_parameters():
            if name in seen:
                raise ValueError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name
            p.initialize(seed, key=f"{namespace}/{name}")
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, dilation=1, padding=0, bias=True,
                 weight_init="kaiming-uniform"):
        self.weight = Parameter((out_ch, in_ch, kernel, kernel), init=weight_init)
        self.bias = Parameter((out_ch,), init="zeros") if bias else None
        self.stride = stride
        self.dilation = dilation
        self.padding = padding

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride,
                          dilation=self.dilation, padding=self.padding)
