"""U-shape segmentation network with CDC encoder blocks and FFC residual blocks."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from .autograd import Tensor
from .cdc import CdcLayer
from .ffc import FfcResidualBlock
from .nn import BatchNorm2d, Conv2d, Module, parameter_count

FFC_PLACEMENTS = ("bottleneck", "stem")


@dataclass
class UcfConfig:
    base_width: int = 32
    depth: int = 4
    theta: float = 0.7
    n_ffc_blocks: int = 5
    alpha: float = 0.5
    ffc_placement: str = "bottleneck"
    in_channels: int = 1

    def validate(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_width < 4:
            raise ValueError(f"base_width must be >= 4, got {self.base_width}")
        if self.n_ffc_blocks < 0:
            raise ValueError(f"n_ffc_blocks must be >= 0, got {self.n_ffc_blocks}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.ffc_placement not in FFC_PLACEMENTS:
            raise ValueError(f"ffc_placement must be one of {FFC_PLACEMENTS}, got {self.ffc_placement!r}")
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {self.in_channels}")

    def channels(self) -> list[int]:
        return [self.base_width * 2 ** i for i in range(self.depth + 1)]

    def to_dict(self) -> dict:
        return asdict(self)


class ResidualBlock(Module):
    """conv3x3-BN-ReLU, then a second conv3x3 (CDC when ``theta`` is given)-BN-ReLU, plus a 1x1 shortcut.

    The 1x1 shortcut aligns ``c_in`` to ``c_out``.
    """

    def __init__(self, c_in: int, c_out: int, *, rng: np.random.Generator, theta: float | None = None):
        self.conv1 = Conv2d(c_in, c_out, 3, rng=rng, bias=False)
        self.bn1 = BatchNorm2d(c_out)
        if theta is None:
            self.conv2 = Conv2d(c_out, c_out, 3, rng=rng, bias=False)
        else:
            self.conv2 = CdcLayer(c_out, c_out, 3, theta=theta, rng=rng, bias=False)
        self.bn2 = BatchNorm2d(c_out)
        self.shortcut = Conv2d(c_in, c_out, 1, rng=rng, bias=True)

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.bn1(self.conv1(x)))
        h = F.relu(self.bn2(self.conv2(h)))
        return h + self.shortcut(x)


def CdcResidualBlock(c_in: int, c_out: int, *, theta: float, rng: np.random.Generator) -> ResidualBlock:
    return ResidualBlock(c_in, c_out, rng=rng, theta=theta)


class UpConv(Module):
    """Bilinear x2 upsampling followed by conv3x3-BN-ReLU."""

    def __init__(self, c_in: int, c_out: int, *, rng: np.random.Generator):
        self.conv = Conv2d(c_in, c_out, 3, rng=rng, bias=False)
        self.bn = BatchNorm2d(c_out)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.bn(self.conv(F.upsample_bilinear2(x))))


class UcfModel(Module):
    def __init__(self, config: UcfConfig, seed: int = 0, *, cdc_encoder: bool = True):
        config.validate()
        self.config = config
        ch = config.channels()
        # independent streams so that shared parts initialize identically across ablation rows
        rng_enc, rng_ffc, rng_dec, rng_head = (np.random.default_rng([seed, i]) for i in range(4))

        theta = config.theta if cdc_encoder else None
        self.encoder = []
        c_prev = config.in_channels
        for c in ch:
            self.encoder.append(ResidualBlock(c_prev, c, rng=rng_enc, theta=theta))
            c_prev = c
        c_ffc = ch[-1] if config.ffc_placement == "bottleneck" else ch[0]
        self.ffc = [FfcResidualBlock(c_ffc, alpha=config.alpha, rng=rng_ffc)
                    for _ in range(config.n_ffc_blocks)]
        self.up = []
        self.decoder = []
        for lvl in reversed(range(config.depth)):
            self.up.append(UpConv(ch[lvl + 1], ch[lvl], rng=rng_dec))
            self.decoder.append(ResidualBlock(2 * ch[lvl], ch[lvl], rng=rng_dec))
        self.head = Conv2d(ch[0], 1, 1, rng=rng_head, bias=True)
        for name, p in self.named_parameters():
            p.name = name

    def _ffc_chain(self, x: Tensor) -> Tensor:
        for block in self.ffc:
            x = block(x)
        return x

    def forward(self, x: Tensor) -> Tensor:
        """Return 1-channel logits with the input's spatial size."""
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ValueError(f"expected input (n, {cfg.in_channels}, h, w), got {x.shape}")
        h, w = x.shape[-2:]
        m = 2 ** cfg.depth
        if h % m or w % m:
            raise ValueError(f"spatial size {h}x{w} is not divisible by {m}; pad the input to a multiple of {m}")
        skips = []
        for lvl, block in enumerate(self.encoder):
            x = block(x)
            if lvl == 0 and cfg.ffc_placement == "stem":
                x = self._ffc_chain(x)
            if lvl < cfg.depth:
                skips.append(x)
                x = F.maxpool2(x)
        if cfg.ffc_placement == "bottleneck":
            x = self._ffc_chain(x)
        for up, block, skip in zip(self.up, self.decoder, reversed(skips)):
            x = block(F.concat_channels(up(x), skip))
        return self.head(x)


def build(config: UcfConfig, seed: int = 0) -> UcfModel:
    """Deterministically initialize a model: identical seeds give identical parameters."""
    return UcfModel(config, seed)


def build_plain_unet(config: UcfConfig, seed: int = 0) -> UcfModel:
    """Same architecture with vanilla 3x3 convolutions in place of CDC in the encoder."""
    return UcfModel(config, seed, cdc_encoder=False)


def forward(model: UcfModel, batch: Tensor) -> Tensor:
    return model(batch)


__all__ = [
    "UcfConfig", "UcfModel", "ResidualBlock", "CdcResidualBlock", "UpConv",
    "build", "build_plain_unet", "forward", "parameter_count",
]
