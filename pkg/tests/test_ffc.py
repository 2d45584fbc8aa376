import numpy as np
import pytest

from ucfnet import functional as F
from ucfnet.autograd import GradientTape, Tensor
from ucfnet.ffc import (FfcLayer, FfcResidualBlock, FourierUnit, ffc_forward,
                        ffc_residual_block_forward, fourier_unit_forward, split_channels)
from ucfnet.nn import Conv2d

from oracles import dft2_naive, idft2_naive


def test_split_channels():
    assert split_channels(4, 0.5) == (2, 2)
    assert split_channels(5, 0.5) == (2, 3)
    with pytest.raises(ValueError, match="alpha"):
        split_channels(1, 0.5)
    with pytest.raises(ValueError):
        split_channels(4, 1.0)


def identity_fu(c, rng):
    fu = FourierUnit(c, rng=rng, bypass_norm_act=True)
    fu.conv.weight.data = np.eye(2 * c).reshape(2 * c, 2 * c, 1, 1)
    return fu


def test_fu_identity_transform(f64, rng):
    fu = identity_fu(3, rng)
    x = rng.standard_normal((2, 3, 8, 6))
    assert np.abs(fourier_unit_forward(Tensor(x), fu).data - x).max() <= 1e-6


def test_fu_zero_weights(f64, rng):
    fu = FourierUnit(2, rng=rng)
    fu.conv.weight.data[...] = 0
    out = fu(Tensor(rng.standard_normal((2, 2, 4, 4)))).data
    np.testing.assert_array_equal(out, 0.0)


def test_fu_matches_naive_dft_reference(f64, rng):
    c, h, w = 2, 5, 6
    fu = FourierUnit(c, rng=rng, bypass_norm_act=True)
    x = rng.standard_normal((1, c, h, w))
    out = fu(Tensor(x)).data
    spec = np.stack([dft2_naive(x[0, i]) for i in range(c)])
    stacked = np.concatenate([spec.real, spec.imag])
    mixed = np.einsum("oi,ihw->ohw", fu.conv.weight.data[:, :, 0, 0], stacked)
    z = mixed[:c] + 1j * mixed[c:]
    ref = np.stack([idft2_naive(z[i], (h, w)) for i in range(c)])
    assert np.abs(out[0] - ref).max() <= 1e-9


def perturb(x, where):
    x2 = x.copy()
    x2[where] += 1.0
    return x2


@pytest.mark.parametrize("training", [True, False])
def test_fu_global_receptive_field(f64, rng, training):
    fu = FourierUnit(2, rng=rng).train(training)
    x = rng.standard_normal((1, 2, 16, 16))
    d = np.abs(fu(Tensor(perturb(x, (0, 0, 5, 9)))).data - fu(Tensor(x)).data)
    assert (d > 1e-12).mean() >= 0.99
    conv = Conv2d(2, 2, 3, rng=rng)
    dc = np.abs(conv(Tensor(perturb(x, (0, 0, 5, 9)))).data - conv(Tensor(x)).data)
    assert (dc > 1e-12).any(axis=1).sum() <= 9


def test_linear_fu_is_not_global(f64, rng):
    # one matrix shared by every frequency is a real-linear map of x(n) and x(-n);
    # the spread comes from the spectral-domain activation
    fu = FourierUnit(2, rng=rng, bypass_norm_act=True)
    x = rng.standard_normal((1, 2, 16, 16))
    d = np.abs(fu(Tensor(perturb(x, (0, 0, 5, 9)))).data - fu(Tensor(x)).data)
    changed = (d > 1e-9).any(axis=1)[0]
    # the inverse transform drops the imaginary parts of the DC and Nyquist
    # columns, which leaks only along the two mirrored rows
    assert set(np.nonzero(changed)[0]) <= {5, 16 - 5}
    assert changed.mean() < 0.1


def test_ffc_shape_and_local_only(f64, rng):
    layer = FfcLayer(6, alpha=0.5, rng=rng)
    x = rng.standard_normal((2, 6, 8, 8))
    assert ffc_forward(Tensor(x), layer).shape == x.shape
    layer.conv_gl.weight.data[...] = 0
    layer.conv_lg.weight.data[...] = 0
    layer.fu.conv.weight.data[...] = 0
    out = ffc_forward(Tensor(x), layer).data
    ref = F.relu(layer.bn_l(layer.conv_ll(Tensor(x[:, :3])))).data
    np.testing.assert_allclose(out[:, :3], ref, atol=1e-12)
    np.testing.assert_array_equal(out[:, 3:], 0.0)


def test_ffc_global_path_reaches_everything(f64, rng):
    layer = FfcLayer(4, rng=rng).eval()  # batch statistics would couple pixels on their own
    x = rng.standard_normal((1, 4, 16, 16))
    x2 = perturb(x, (0, 3, 7, 7))

    def y_global(v):  # pre-normalization global output: conv_lg(x_l) + FU(x_g)
        t = Tensor(v)
        return (layer.conv_lg(F.channel_slice(t, 0, 2)) + layer.fu(F.channel_slice(t, 2, 4))).data

    d = np.abs(y_global(x2) - y_global(x))
    assert (d > 1e-12).mean() >= 0.99
    # the local output only sees the perturbation through the 3x3 conv_gl
    dl = np.abs(ffc_forward(Tensor(x2), layer).data[:, :2] - ffc_forward(Tensor(x), layer).data[:, :2])
    assert (dl > 1e-12).any(axis=1).sum() <= 9


def test_ffc_channel_mismatch(rng):
    with pytest.raises(ValueError):
        FfcLayer(4, rng=rng)(Tensor(np.zeros((1, 3, 4, 4))))


def test_residual_block_zero_weights_is_identity(f64, rng):
    block = FfcResidualBlock(4, rng=rng)
    for p in block.parameters():
        p.data[...] = 0
    x = rng.standard_normal((2, 4, 4, 4))
    np.testing.assert_array_equal(ffc_residual_block_forward(Tensor(x), block).data, x)


def test_residual_block_identity_gradient(f64, rng):
    block = FfcResidualBlock(4, rng=rng)
    for p in block.parameters():
        p.data[...] = 0
    x = Tensor(rng.standard_normal((2, 4, 4, 4)), requires_grad=True)
    with GradientTape() as tape:
        loss = block(x).sum()
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 1.0)
