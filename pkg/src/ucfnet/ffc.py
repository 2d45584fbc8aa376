"""Fast Fourier convolution: Fourier unit, split-channel FFC layer and its residual block."""
from __future__ import annotations

import numpy as np

from . import functional as F
from .autograd import Tensor
from .nn import BatchNorm2d, Conv2d, Module


class FourierUnit(Module):
    """rFFT -> 1x1 conv on stacked (real, imag) channels -> norm -> ReLU -> inverse rFFT.

    A single frequency bin depends on every spatial position, so one
    pointwise layer here mixes information across the whole image.  With
    ``bypass_norm_act=True`` the normalization and activation are skipped;
    that configuration exists for testing the transform round trip.
    """

    def __init__(self, channels: int, *, rng: np.random.Generator, bypass_norm_act: bool = False):
        self.channels = channels
        self.bypass_norm_act = bypass_norm_act
        self.conv = Conv2d(2 * channels, 2 * channels, 1, rng=rng, bias=False)
        self.bn = BatchNorm2d(2 * channels)

    def forward(self, x: Tensor) -> Tensor:
        return fourier_unit_forward(x, self)


def fourier_unit_forward(x_g: Tensor, fu: FourierUnit) -> Tensor:
    if x_g.shape[1] != fu.channels:
        raise ValueError(f"FourierUnit expects {fu.channels} channels, got {x_g.shape[1]}")
    h, w = x_g.shape[-2:]
    spec = F.complex_to_real(F.rfft2(x_g))
    spec = fu.conv(spec)
    if not fu.bypass_norm_act:
        spec = F.relu(fu.bn(spec))
    return F.irfft2(F.real_to_complex(spec), (h, w))


def split_channels(c: int, alpha: float) -> tuple[int, int]:
    """Return ``(c_local, c_global)`` with ``c_global = round(alpha * c)``; both must be >= 1."""
    c_global = int(np.floor(alpha * c + 0.5))
    c_local = c - c_global
    if c_global < 1 or c_local < 1:
        raise ValueError(
            f"alpha={alpha} splits {c} channels into local={c_local}, global={c_global}; both must be >= 1"
        )
    return c_local, c_global


class FfcLayer(Module):
    """Local/global split layer with four transfer paths.

    ``Y_l = conv_ll(x_l) + conv_gl(x_g)`` and ``Y_g = conv_lg(x_l) + FU(x_g)``,
    each branch followed by batch norm and ReLU, then concatenated as
    ``(Y_l, Y_g)``.
    """

    def __init__(self, channels: int, *, alpha: float = 0.5, rng: np.random.Generator,
                 kernel_size: int = 3):
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        self.channels = channels
        self.alpha = alpha
        self.c_local, self.c_global = split_channels(channels, alpha)
        cl, cg = self.c_local, self.c_global
        self.conv_ll = Conv2d(cl, cl, kernel_size, rng=rng, bias=False)
        self.conv_gl = Conv2d(cg, cl, kernel_size, rng=rng, bias=False)
        self.conv_lg = Conv2d(cl, cg, kernel_size, rng=rng, bias=False)
        self.fu = FourierUnit(cg, rng=rng)
        self.bn_l = BatchNorm2d(cl)
        self.bn_g = BatchNorm2d(cg)

    def forward(self, x: Tensor) -> Tensor:
        return ffc_forward(x, self)


def ffc_forward(x: Tensor, layer: FfcLayer) -> Tensor:
    if x.shape[1] != layer.channels:
        raise ValueError(f"FfcLayer expects {layer.channels} channels, got {x.shape[1]}")
    x_l = F.channel_slice(x, 0, layer.c_local)
    x_g = F.channel_slice(x, layer.c_local, layer.channels)
    y_l = layer.conv_ll(x_l) + layer.conv_gl(x_g)
    y_g = layer.conv_lg(x_l) + layer.fu(x_g)
    y_l = F.relu(layer.bn_l(y_l))
    y_g = F.relu(layer.bn_g(y_g))
    return F.concat_channels(y_l, y_g)


class FfcResidualBlock(Module):
    """Two cascaded FFC layers with an identity shortcut."""

    def __init__(self, channels: int, *, alpha: float = 0.5, rng: np.random.Generator):
        self.ffc1 = FfcLayer(channels, alpha=alpha, rng=rng)
        self.ffc2 = FfcLayer(channels, alpha=alpha, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return ffc_residual_block_forward(x, self)


def ffc_residual_block_forward(x: Tensor, block: FfcResidualBlock) -> Tensor:
    return x + block.ffc2(block.ffc1(x))
