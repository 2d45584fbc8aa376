"""Central difference convolution.

Each output blends a vanilla convolution with a neighbour-minus-centre term::

    out(p) = theta * sum_r w_r * (F(p + r) - F(p)) + (1 - theta) * sum_r w_r * F(p + r)
           = conv(F, w)(p) - theta * F(p) * sum_r w_r

so the layer is a single convolution whose centre tap is reduced by
``theta * sum(w)``.  Zero padding is treated as ``F = 0`` on the padded taps,
identically in the fast path and in :func:`cdc_brute`.
"""
from __future__ import annotations

import numpy as np

from . import functional as F
from .autograd import Tensor, make_result
from .nn import Conv2d, Module


def cdc_kernel(weight: Tensor, theta: float) -> Tensor:
    """Effective kernel ``w - theta * sum(w) * delta_centre`` (differentiable in ``w``)."""
    k = weight.shape[-1]
    c = k // 2
    eff = weight.data.copy()
    eff[:, :, c, c] -= theta * weight.data.sum(axis=(2, 3))

    def bw(g):
        gw = g.copy()
        gw -= theta * g[:, :, c, c][:, :, None, None]
        return (gw,)

    return make_result(eff, (weight,), bw)


class CdcLayer(Module):
    """Convolution weights plus the contrast ratio ``theta`` in [0, 1].

    ``theta`` is a fixed hyperparameter, not trained.
    """

    def __init__(self, c_in: int, c_out: int, kernel_size: int = 3, *, theta: float,
                 rng: np.random.Generator, bias: bool = True, stride: int = 1,
                 padding: int | None = None):
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        self.theta = float(theta)
        self.conv = Conv2d(c_in, c_out, kernel_size, rng=rng, bias=bias, stride=stride, padding=padding)

    @property
    def weight(self):
        return self.conv.weight

    @property
    def bias(self):
        return self.conv.bias

    def forward(self, x: Tensor) -> Tensor:
        return cdc_forward(x, self)


def cdc_forward(x: Tensor, layer: CdcLayer) -> Tensor:
    conv = layer.conv
    if layer.theta == 0.0:
        w = conv.weight
    else:
        w = cdc_kernel(conv.weight, layer.theta)
    return F.conv2d(x, w, conv.bias, conv.stride, conv.padding)


def cdc_brute(x: Tensor | np.ndarray, layer: CdcLayer) -> np.ndarray:
    """Reference evaluation window by window, straight from the blended definition.

    Loops over output pixels and kernel taps; vectorized only over batch and
    channels.  Meant for small verification inputs.
    """
    xd = x.data if isinstance(x, Tensor) else np.asarray(x)
    w = layer.conv.weight.data
    b = layer.conv.bias
    theta, s, p = layer.theta, layer.conv.stride, layer.conv.padding
    n, c, h, wd = xd.shape
    co, ci, k, _ = w.shape
    if ci != c:
        raise ValueError(f"cdc_brute: input has {c} channels, layer expects {ci}")
    ho = (h + 2 * p - k) // s + 1
    wo = (wd + 2 * p - k) // s + 1
    half = k // 2
    out = np.zeros((n, co, ho, wo), dtype=np.float64)
    for oy in range(ho):
        for ox in range(wo):
            # window centre in input coordinates
            cy, cx = oy * s - p + half, ox * s - p + half
            centre = xd[:, :, cy, cx] if (0 <= cy < h and 0 <= cx < wd) else np.zeros((n, c))
            diff_term = np.zeros((n, co))
            plain_term = np.zeros((n, co))
            for i in range(k):
                for j in range(k):
                    yy, xx = cy + i - half, cx + j - half
                    nb = xd[:, :, yy, xx] if (0 <= yy < h and 0 <= xx < wd) else np.zeros((n, c))
                    tap = w[:, :, i, j]
                    diff_term += (nb - centre) @ tap.T
                    plain_term += nb @ tap.T
            out[:, :, oy, ox] = theta * diff_term + (1 - theta) * plain_term
    if b is not None:
        out += b.data[None, :, None, None]
    return out
