"""Training criterion: binary cross entropy on logits plus soft IoU on probabilities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .autograd import Tensor


@dataclass
class LossConfig:
    bce_weight: float = 1.0
    soft_iou_weight: float = 1.0
    epsilon: float = 1e-6

    def validate(self) -> None:
        if self.bce_weight < 0 or self.soft_iou_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.bce_weight == 0 and self.soft_iou_weight == 0:
            raise ValueError("bce_weight and soft_iou_weight cannot both be zero")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


def bce_loss(logits: Tensor, target) -> Tensor:
    """Mean over pixels of ``-[y log s(z) + (1 - y) log(1 - s(z))]``, evaluated from logits."""
    return F.bce_with_logits(logits, target)


def soft_iou_loss(probs: Tensor, target, epsilon: float = 1e-6) -> Tensor:
    """``1 - (sum(p*y) + eps) / (sum(p) + sum(y) - sum(p*y) + eps)``.

    The sums run over every pixel of the batch, giving one ratio per batch.
    """
    y = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=probs.dtype)
    if y.shape != probs.shape:
        raise ValueError(f"soft_iou_loss: target shape {y.shape} != probs shape {probs.shape}")
    inter = (probs * y).sum()
    union = probs.sum() + float(y.sum()) - inter
    return 1.0 - (inter + epsilon) / (union + epsilon)


def total_loss(logits: Tensor, target, config: LossConfig | None = None) -> tuple[Tensor, dict]:
    """Weighted sum of both terms; also returns the individual values as floats."""
    config = config or LossConfig()
    parts = {}
    total = None
    if config.bce_weight:
        bce = bce_loss(logits, target)
        parts["bce"] = float(bce.data)
        total = bce * config.bce_weight
    if config.soft_iou_weight:
        siou = soft_iou_loss(F.sigmoid(logits), target, config.epsilon)
        parts["soft_iou"] = float(siou.data)
        term = siou * config.soft_iou_weight
        total = term if total is None else total + term
    parts["total"] = float(total.data)
    return total, parts
