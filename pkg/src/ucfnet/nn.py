"""Minimal module system: parameter registry, train/eval switch, conv and norm layers."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .autograd import Parameter, Tensor, default_dtype


class Module:
    """Base class; parameters and submodules are discovered from attributes in definition order."""

    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, val in vars(self).items():
            if isinstance(val, (Parameter, Module)):
                yield key, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in self._children():
            full = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield full, val
            else:
                yield from val.named_parameters(full + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, val in self._children():
            if isinstance(val, Module):
                yield from val.named_buffers(f"{prefix}{key}.")
        for key, val in getattr(self, "_buffers", {}).items():
            yield f"{prefix}{key}", val

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, val in self._children():
            if isinstance(val, Module):
                yield from val.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


class Conv2d(Module):
    """Square-kernel convolution with "same" padding by default."""

    def __init__(self, c_in: int, c_out: int, kernel_size: int = 3, *, rng: np.random.Generator,
                 bias: bool = True, stride: int = 1, padding: int | None = None):
        if kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {kernel_size}")
        self.c_in, self.c_out, self.kernel_size = c_in, c_out, kernel_size
        self.stride = stride
        self.padding = (kernel_size - 1) // 2 if padding is None else padding
        self.weight = Parameter(kaiming_uniform(rng, (c_out, c_in, kernel_size, kernel_size)))
        self.bias = Parameter(np.zeros(c_out, dtype=default_dtype())) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels: int, affine: bool = True):
        dt = default_dtype()
        self.channels = channels
        self.gamma = Parameter(np.ones(channels, dtype=dt)) if affine else None
        self.beta = Parameter(np.zeros(channels, dtype=dt)) if affine else None
        self._buffers = {
            "running_mean": np.zeros(channels, dtype=dt),
            "running_var": np.ones(channels, dtype=dt),
        }

    @property
    def running_mean(self) -> np.ndarray:
        return self._buffers["running_mean"]

    @property
    def running_var(self) -> np.ndarray:
        return self._buffers["running_var"]

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm2d(x, self.gamma, self.beta, self._buffers["running_mean"],
                             self._buffers["running_var"], training=self.training)


def parameter_count(module: Module) -> int:
    return sum(p.data.size for p in module.parameters())
