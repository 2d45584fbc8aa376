"""AdamW with a cosine-annealed learning rate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import Parameter


@dataclass
class OptimConfig:
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 1e-2
    eps: float = 1e-8
    epochs: int = 300
    batch_size: int = 8

    def validate(self) -> None:
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError(f"need 0 < lr_min <= lr_max, got lr_min={self.lr_min}, lr_max={self.lr_max}")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ValueError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def cosine_lr(t: int, total: int, lr_max: float, lr_min: float) -> float:
    """Single half-period cosine decay from ``lr_max`` at ``t=0`` to ``lr_min`` at ``t=total``."""
    if total <= 0:
        return lr_max
    if not 0 <= t <= total:
        raise ValueError(f"step {t} outside [0, {total}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * t / total))


@dataclass
class AdamWState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def decays(p: Parameter) -> bool:
    # biases and normalization affine terms are 1-D and excluded from weight decay
    return p.data.ndim > 1


def optimizer_step(params: list[Parameter], state: AdamWState, lr: float, config: OptimConfig) -> None:
    """One AdamW update in place.

    Weight decay is applied to the weights directly, ``p *= 1 - lr * wd``,
    before the bias-corrected moment step.  Raises ``FloatingPointError``
    naming the first parameter whose gradient is not finite; nothing is
    updated in that case.
    """
    for p in params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {p.name or '<unnamed>'}; step rejected")
    b1, b2 = config.betas
    state.step += 1
    t = state.step
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for i, p in enumerate(params):
        if p.grad is None:
            continue
        key = p.name or str(i)
        g = p.grad
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        if config.weight_decay and decays(p):
            p.data *= 1 - lr * config.weight_decay
        p.data -= (lr / c1) * m / (np.sqrt(v / c2) + config.eps)


class AdamW:
    """Stateful wrapper owning the moment accumulators for a parameter list."""

    def __init__(self, params: list[Parameter], config: OptimConfig):
        config.validate()
        self.params = params
        self.config = config
        self.state = AdamWState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float) -> None:
        optimizer_step(self.params, self.state, lr, self.config)
