"""Differentiable layer primitives on NCHW tensors.

Conventions used throughout the package:

* convolution is cross-correlation (no kernel flip);
* the real FFT keeps ``w // 2 + 1`` horizontal frequencies, the forward
  transform is unscaled and the inverse carries the ``1 / (h * w)`` factor;
* batch normalization uses the population variance, ``eps = 1e-5`` and a
  running-statistics momentum of 0.1.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor, as_tensor, make_result

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _check4(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{what}: expected a 4-D (n, c, h, w) tensor, got shape {x.shape}")


# ---------------------------------------------------------------- convolution


try:  # optional: torch's CPU convolution kernels, used only as array kernels
    import torch as _torch
except ImportError:  # pragma: no cover - exercised when torch is absent
    _torch = None

_CONV_BACKEND = "torch" if _torch is not None else "numpy"


def conv_backend() -> str:
    return _CONV_BACKEND


def set_conv_backend(name: str) -> None:
    """Select the convolution kernels: ``"torch"`` (default when installed) or ``"numpy"``."""
    global _CONV_BACKEND
    if name not in ("torch", "numpy"):
        raise ValueError(f"unknown conv backend {name!r}")
    if name == "torch" and _torch is None:
        raise RuntimeError("torch is not installed; use the numpy backend")
    if name == "torch":
        _torch.set_num_threads(1)
    _CONV_BACKEND = name


def set_threads(n: int) -> None:
    """Thread count for the torch kernels; 1 (the default) keeps results bit-reproducible."""
    if n < 1:
        raise ValueError(f"threads must be >= 1, got {n}")
    if _torch is not None:
        _torch.set_num_threads(n)


if _torch is not None:
    _torch.set_num_threads(1)


def _im2col(xd, k, stride, padding, ho, wo):
    n, c = xd.shape[:2]
    if k == 1 and stride == 1 and padding == 0:
        return xd.reshape(n, c, ho * wo)
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)


def _conv_numpy(xd, wd, stride, padding, ho, wo):
    n = xd.shape[0]
    co, ci, k, _ = wd.shape
    cols = _im2col(xd, k, stride, padding, ho, wo)
    out = np.matmul(wd.reshape(co, ci * k * k), cols).reshape(n, co, ho, wo)

    def grads(g, need_x, need_w):
        gm = g.reshape(n, co, ho * wo)
        gx = gw = None
        if need_w:
            gw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(wd.shape)
        if need_x:
            h, w = xd.shape[-2:]
            dcols = np.matmul(wd.reshape(co, -1).T, gm)
            if k == 1 and stride == 1 and padding == 0:
                gx = dcols.reshape(xd.shape)
            else:
                dcols = dcols.reshape(n, ci, k, k, ho, wo)
                gxp = np.zeros((n, ci, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
                for i in range(k):
                    for j in range(k):
                        gxp[:, :, i:i + stride * (ho - 1) + 1:stride,
                            j:j + stride * (wo - 1) + 1:stride] += dcols[:, :, i, j]
                gx = gxp[:, :, padding:padding + h, padding:padding + w]
        return gx, gw

    return out, grads


def _conv_torch(xd, wd, stride, padding, ho, wo):
    tx = _torch.from_numpy(np.ascontiguousarray(xd))
    tw = _torch.from_numpy(np.ascontiguousarray(wd))
    out = _torch.nn.functional.conv2d(tx, tw, None, stride, padding).numpy()

    def grads(g, need_x, need_w):
        tg = _torch.from_numpy(np.ascontiguousarray(g))
        gx, gw, _ = _torch.ops.aten.convolution_backward(
            tg, tx, tw, None, [stride, stride], [padding, padding], [1, 1],
            False, [0, 0], 1, [need_x, need_w, False])
        return (gx.numpy() if need_x else None), (gw.numpy() if need_w else None)

    return out, grads


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation.

    ``weight`` has shape ``(c_out, c_in, k, k)``; output spatial size is
    ``(h + 2 * padding - k) // stride + 1``.
    """
    _check4(x, "conv2d")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d: weight must be (c_out, c_in, k, k), got {weight.shape}")
    n, c, h, w = x.shape
    co, ci, k, _ = weight.shape
    if ci != c:
        raise ValueError(f"conv2d: input has c_in={c} channels but weight expects c_in={ci}")
    if bias is not None and bias.shape != (co,):
        raise ValueError(f"conv2d: bias must have shape ({co},), got {bias.shape}")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {k} does not fit input height/width {h}x{w}")

    kernel = _conv_torch if _CONV_BACKEND == "torch" else _conv_numpy
    out, grads = kernel(x.data, weight.data, stride, padding, ho, wo)
    if bias is not None:
        out += bias.data[:, None, None]

    def bw(g):
        gx, gw = grads(g, x.requires_grad, weight.requires_grad)
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    return make_result(out, (x, weight, bias), bw)


# ------------------------------------------------------------------------ FFT


def rfft2(x: Tensor) -> Tensor:
    """Real 2-D FFT over the last two axes; returns a complex spectrum tensor.

    The result has shape ``(n, c, h, w // 2 + 1)``.  Its DC bin equals the sum
    of the inputs.
    """
    _check4(x, "rfft2")
    h, w = x.shape[-2:]
    wh = w // 2 + 1

    def bw(g):
        full = np.zeros(g.shape[:-1] + (w,), dtype=g.dtype)
        full[..., :wh] = g
        return (np.fft.ifft2(full).real.astype(x.dtype) * (h * w),)

    return make_result(np.fft.rfft2(x.data), (x,), bw)


def irfft2(z: Tensor, size: tuple[int, int]) -> Tensor:
    """Inverse of :func:`rfft2` for a real signal of spatial ``size = (h, w)``."""
    h, w = size
    if z.ndim != 4 or z.shape[-2] != h or z.shape[-1] != w // 2 + 1:
        raise ValueError(
            f"irfft2: spectrum shape {z.shape} inconsistent with size {size}; "
            f"expected (..., {h}, {w // 2 + 1})"
        )
    out = np.fft.irfft2(z.data, s=(h, w))

    def bw(g):
        gz = np.fft.rfft2(g) / (h * w)
        gz[..., 1:(w + 1) // 2] *= 2
        return (gz,)

    return make_result(out, (z,), bw)


def complex_to_real(z: Tensor) -> Tensor:
    """Stack real parts then imaginary parts along the channel axis (c -> 2c)."""
    c = z.shape[1]
    out = np.concatenate([z.data.real, z.data.imag], axis=1)
    return make_result(out, (z,), lambda g: (g[:, :c] + 1j * g[:, c:],))


def real_to_complex(x: Tensor) -> Tensor:
    """Inverse of :func:`complex_to_real` (2c -> c)."""
    c2 = x.shape[1]
    if c2 % 2:
        raise ValueError(f"real_to_complex: channel count {c2} is odd")
    c = c2 // 2
    out = x.data[:, :c] + 1j * x.data[:, c:]
    return make_result(out, (x,), lambda g: (np.concatenate([g.real, g.imag], axis=1),))


# ------------------------------------------------------------- normalization


def batchnorm2d(x: Tensor, gamma: Tensor | None, beta: Tensor | None,
                running_mean: np.ndarray, running_var: np.ndarray,
                training: bool = True, momentum: float = BN_MOMENTUM,
                eps: float = BN_EPS) -> Tensor:
    """Per-channel batch normalization.

    In training mode the batch statistics are used and the running buffers are
    updated in place; in eval mode the running buffers are used.
    """
    _check4(x, "batchnorm2d")
    n, c, h, w = x.shape
    xd = x.data
    if training:
        count = n * h * w
        if count < 2:
            raise ValueError(f"batchnorm2d: training mode needs n*h*w >= 2, got {count}")
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean.astype(xd.dtype), running_var.astype(xd.dtype)
    inv = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
    xhat = (xd - mean[:, None, None]) * inv[:, None, None]
    out = xhat
    if gamma is not None:
        out = out * gamma.data[:, None, None]
    if beta is not None:
        out = out + beta.data[:, None, None]

    def bw(g):
        gg = gb = None
        if gamma is not None and gamma.requires_grad:
            gg = (g * xhat).sum(axis=(0, 2, 3))
        if beta is not None and beta.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data[:, None, None] if gamma is not None else g
            if training:
                m = n * h * w
                s1 = dxhat.sum(axis=(0, 2, 3))[:, None, None]
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[:, None, None]
                gx = (dxhat - s1 / m - xhat * (s2 / m)) * inv[:, None, None]
            else:
                gx = dxhat * inv[:, None, None]
        return gx, gg, gb

    return make_result(out, (x, gamma, beta), bw)


# ---------------------------------------------------------------- activations


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return make_result(out, (x,), lambda g: (g * (out > 0),))


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = (0.5 * (1.0 + np.tanh(0.5 * x.data))).astype(x.dtype)
    return make_result(s, (x,), lambda g: (g * s * (1 - s),))


# ---------------------------------------------------------------- resampling


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2.  Height and width must be even."""
    _check4(x, "maxpool2")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2: spatial size {h}x{w} is odd; pad inputs to a multiple of 16")
    r = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = r.argmax(axis=-1)[..., None]
    out = np.take_along_axis(r, idx, axis=-1)[..., 0]

    def bw(g):
        gr = np.zeros(r.shape, dtype=g.dtype)
        np.put_along_axis(gr, idx, g[..., None], axis=-1)
        return (gr.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

    return make_result(out, (x,), bw)


@lru_cache(maxsize=None)
def _upsample_matrix(size: int, dtype_str: str) -> np.ndarray:
    # half-pixel centers, edge-clamped (align_corners=False)
    m = np.zeros((2 * size, size))
    for o in range(2 * size):
        src = max((o + 0.5) / 2 - 0.5, 0.0)
        i0 = min(int(np.floor(src)), size - 1)
        i1 = min(i0 + 1, size - 1)
        t = src - i0
        m[o, i0] += 1 - t
        m[o, i1] += t
    m.setflags(write=False)
    return m.astype(dtype_str)


def upsample_bilinear2(x: Tensor) -> Tensor:
    """Bilinear x2 upsampling with half-pixel centers."""
    _check4(x, "upsample_bilinear2")
    h, w = x.shape[-2:]
    uh = _upsample_matrix(h, x.dtype.str)
    uw = _upsample_matrix(w, x.dtype.str)
    out = np.matmul(np.matmul(uh, x.data), uw.T)
    return make_result(out, (x,), lambda g: (np.matmul(np.matmul(uh.T, g), uw),))


# ----------------------------------------------------------------- channels


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    _check4(a, "concat_channels")
    _check4(b, "concat_channels")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat_channels: shapes {a.shape} and {b.shape} differ outside the channel axis")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return make_result(out, (a, b), lambda g: (g[:, :ca], g[:, ca:]))


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    _check4(x, "channel_slice")
    shape = x.shape

    def bw(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[:, start:stop] = g
        return (gx,)

    return make_result(x.data[:, start:stop], (x,), bw)


# --------------------------------------------------------------------- losses


def bce_with_logits(logits: Tensor, target) -> Tensor:
    """Mean binary cross entropy computed stably from logits."""
    y = target.data if isinstance(target, Tensor) else np.asarray(target)
    if y.shape != logits.shape:
        raise ValueError(f"bce_with_logits: target shape {y.shape} != logits shape {logits.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("bce_with_logits: target must contain only 0 and 1")
    z = logits.data
    y = y.astype(z.dtype)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = z.size

    def bw(g):
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return (g * (s - y) / n,)

    return make_result(np.asarray(loss.mean(), dtype=z.dtype), (logits,), bw)
