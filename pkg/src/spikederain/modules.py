"""Minimal parameter-container system for composing the network.

A ``Module`` discovers parameters, buffers and submodules from its instance
attributes (insertion order, so naming is deterministic for checkpoints).
Buffers are non-trainable state such as batch-norm running statistics.
"""

import numpy as np

from .autodiff import Tensor, default_dtype, parameter


class Module:
    def named_parameters(self, prefix=""):
        for name, child in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(child, Tensor) and child.requires_grad:
                yield full, child
            elif isinstance(child, Module):
                yield from child.named_parameters(f"{full}.")
            elif isinstance(child, (list, tuple)):
                for i, item in enumerate(child):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, child in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(child, Tensor) and not child.requires_grad:
                yield full, child
            elif isinstance(child, Module):
                yield from child.named_buffers(f"{full}.")
            elif isinstance(child, (list, tuple)):
                for i, item in enumerate(child):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{full}.{i}.")

    def state_dict(self):
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: b.data for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state):
        entries = dict(self.named_parameters())
        entries.update(dict(self.named_buffers()))
        missing = set(entries) - set(state)
        unexpected = set(state) - set(entries)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, tensor in entries.items():
            arr = np.asarray(state[name], dtype=tensor.data.dtype)
            if arr.shape != tensor.data.shape:
                raise ValueError(f"state entry {name!r}: shape {arr.shape} != {tensor.data.shape}")
            tensor.data = arr.copy()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def param_count(self):
        return sum(p.size for p in self.parameters())


def he_normal(rng, shape, fan_in):
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=shape).astype(default_dtype())


class Conv2d(Module):
    def __init__(self, rng, in_ch, out_ch, kernel, stride=1, padding=None, zero_init=False):
        from .convops import conv2d

        self._conv = conv2d
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        if zero_init:
            w = np.zeros((out_ch, in_ch, kernel, kernel), dtype=default_dtype())
        else:
            w = he_normal(rng, (out_ch, in_ch, kernel, kernel), in_ch * kernel * kernel)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(out_ch, dtype=default_dtype()))

    def __call__(self, x):
        return self._conv(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, rng, in_ch, out_ch, kernel=2, stride=2, padding=0):
        from .convops import conv_transpose2d

        self._conv = conv_transpose2d
        self.stride = stride
        self.padding = padding
        w = he_normal(rng, (in_ch, out_ch, kernel, kernel), in_ch * kernel * kernel)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(out_ch, dtype=default_dtype()))

    def __call__(self, x):
        return self._conv(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
