import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ucfnet import functional as F
from ucfnet.autograd import GradientTape, Tensor, precision
from ucfnet.nn import BatchNorm2d

from oracles import conv2d_loops, dft2_naive, idft2_naive


@pytest.fixture(params=["torch", "numpy"])
def backend(request):
    old = F.conv_backend()
    F.set_conv_backend(request.param)
    yield request.param
    F.set_conv_backend(old)


# ---------------------------------------------------------------- conv2d


def test_conv_identity_kernel(f64, backend, rng):
    x = rng.standard_normal((2, 3, 5, 5))
    w = np.zeros((3, 3, 1, 1))
    w[range(3), range(3)] = 1.0
    out = F.conv2d(Tensor(x), Tensor(w))
    np.testing.assert_array_equal(out.data, x)


def test_conv_all_ones_constant_interior(f64, backend):
    x = np.full((1, 1, 6, 6), 2.5)
    out = F.conv2d(Tensor(x), Tensor(np.ones((1, 1, 3, 3))), padding=1).data
    np.testing.assert_allclose(out[0, 0, 1:-1, 1:-1], 9 * 2.5)
    assert out[0, 0, 0, 0] == pytest.approx(4 * 2.5)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv_matches_loops(f64, backend, rng, stride, padding):
    x = rng.standard_normal((2, 3, 7, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding).data
    np.testing.assert_allclose(out, conv2d_loops(x, w, b, stride, padding), atol=1e-12)


def test_conv_backends_agree_on_gradients(f64, rng):
    x = Tensor(rng.standard_normal((2, 3, 6, 6)), requires_grad=True)
    w = Tensor(rng.standard_normal((5, 3, 3, 3)), requires_grad=True)
    r = Tensor(rng.standard_normal((2, 5, 6, 6)))
    grads = {}
    old = F.conv_backend()
    for name in ("numpy", "torch"):
        F.set_conv_backend(name)
        x.grad = w.grad = None
        with GradientTape() as tape:
            loss = (F.conv2d(x, w, padding=1) * r).sum()
        tape.backward(loss)
        grads[name] = (x.grad.copy(), w.grad.copy())
    F.set_conv_backend(old)
    for a, b in zip(grads["numpy"], grads["torch"]):
        np.testing.assert_allclose(a, b, atol=1e-11)


def test_conv_shape_errors():
    x = Tensor(np.zeros((1, 3, 4, 4)))
    with pytest.raises(ValueError, match="c_in=3"):
        F.conv2d(x, Tensor(np.zeros((2, 2, 3, 3))))
    with pytest.raises(ValueError, match="4-D"):
        F.conv2d(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((2, 3, 3, 3))))
    with pytest.raises(ValueError, match="does not fit"):
        F.conv2d(Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.zeros((2, 3, 3, 3))))


def test_conv_32_bit_output(rng):
    out = F.conv2d(Tensor(rng.standard_normal((1, 2, 4, 4))), Tensor(rng.standard_normal((1, 2, 3, 3))))
    assert out.data.dtype == np.float32


# ------------------------------------------------------------------- FFT


def test_rfft_constant_is_dc_only(f64):
    h, w, c = 6, 8, 1.7
    z = F.rfft2(Tensor(np.full((1, 1, h, w), c))).data[0, 0]
    assert z.shape == (h, w // 2 + 1)
    assert abs(z[0, 0] - c * h * w) < 1e-10
    z[0, 0] = 0
    assert np.abs(z).max() < 1e-10


@pytest.mark.parametrize("size", [(8, 8), (5, 7), (6, 9), (1, 4)])
def test_fft_roundtrip(f64, rng, size):
    x = rng.standard_normal((2, 3) + size)
    back = F.irfft2(F.rfft2(Tensor(x)), size).data
    assert np.abs(back - x).max() <= 1e-10


@pytest.mark.parametrize("size", [(8, 8), (5, 6)])
def test_rfft_matches_naive_dft(f64, rng, size):
    x = rng.standard_normal(size)
    z = F.rfft2(Tensor(x[None, None])).data[0, 0]
    assert np.abs(z - dft2_naive(x)).max() <= 1e-9


@pytest.mark.parametrize("size", [(8, 8), (5, 7)])
def test_irfft_matches_naive_inverse(f64, rng, size):
    # spectrum of a real signal so that the Hermitian constraints hold
    z = dft2_naive(rng.standard_normal(size))
    out = F.irfft2(Tensor(z[None, None]), size).data[0, 0]
    assert np.abs(out - idft2_naive(z, size)).max() <= 1e-9


def test_irfft_zero_and_impulse(f64):
    h, w = 4, 6
    zero = F.irfft2(Tensor(np.zeros((1, 1, h, w // 2 + 1), dtype=complex)), (h, w)).data
    assert not np.any(zero)
    impulse = np.zeros((1, 1, h, w))
    impulse[0, 0, 0, 0] = 1.0
    spec = F.rfft2(Tensor(impulse)).data
    np.testing.assert_allclose(spec, 1.0)
    field = F.irfft2(Tensor(np.ones((1, 1, h, w // 2 + 1), dtype=complex)), (h, w)).data
    expected = np.zeros((h, w))
    expected[0, 0] = 1.0
    np.testing.assert_allclose(field[0, 0], expected, atol=1e-14)
    # a DC-only spectrum with unit weight is the constant field 1/(h w)
    dc = np.zeros((1, 1, h, w // 2 + 1), dtype=complex)
    dc[..., 0, 0] = 1.0
    np.testing.assert_allclose(F.irfft2(Tensor(dc), (h, w)).data, 1.0 / (h * w))


def parseval_energy(z, w):
    # full-spectrum energy from the half spectrum: mirrored columns count twice
    weights = np.full(z.shape[-1], 2.0)
    weights[0] = 1.0
    if w % 2 == 0:
        weights[-1] = 1.0
    return float((np.abs(z) ** 2 * weights).sum())


@settings(max_examples=25, deadline=None)
@given(h=st.integers(1, 9), w=st.integers(1, 9), seed=st.integers(0, 2 ** 16))
def test_parseval(h, w, seed):
    with precision("float64"):
        x = np.random.default_rng(seed).standard_normal((1, 1, h, w))
        z = F.rfft2(Tensor(x)).data
        lhs = float((x ** 2).sum())
        rhs = parseval_energy(z, w) / (h * w)
        assert abs(lhs - rhs) <= 1e-8 * max(lhs, 1e-300)


def test_fft_linearity(f64, rng):
    a, b = rng.standard_normal((2, 1, 1, 6, 5))
    za, zb = F.rfft2(Tensor(a)).data, F.rfft2(Tensor(b)).data
    np.testing.assert_allclose(F.rfft2(Tensor(2 * a - 3 * b)).data, 2 * za - 3 * zb, atol=1e-12)


def test_irfft_size_mismatch():
    with pytest.raises(ValueError, match="inconsistent"):
        F.irfft2(Tensor(np.zeros((1, 1, 4, 4), dtype=complex)), (4, 8))


def test_complex_real_stacking(f64, rng):
    z = rng.standard_normal((1, 2, 3, 3)) + 1j * rng.standard_normal((1, 2, 3, 3))
    stacked = F.complex_to_real(Tensor(z)).data
    np.testing.assert_array_equal(stacked[:, :2], z.real)
    np.testing.assert_array_equal(stacked[:, 2:], z.imag)
    np.testing.assert_array_equal(F.real_to_complex(Tensor(stacked)).data, z)


# ------------------------------------------------------------ primitives


def test_relu_values():
    out = F.relu(Tensor(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3))).data.ravel()
    np.testing.assert_array_equal(out, [0, 0, 2])


def test_sigmoid_zero_and_extremes(f64):
    out = F.sigmoid(Tensor(np.array([0.0, 800.0, -800.0]))).data
    np.testing.assert_allclose(out, [0.5, 1.0, 0.0])


def test_batchnorm_two_values(f64):
    x = np.array([1.0, 3.0]).reshape(1, 1, 1, 2)
    bn = BatchNorm2d(1)
    out = bn(Tensor(x)).data.ravel()
    np.testing.assert_allclose(out, [-1, 1], atol=1e-5)
    # running stats moved 10% toward the batch mean 2 and population variance 1
    np.testing.assert_allclose(bn.running_mean, [0.2])
    np.testing.assert_allclose(bn.running_var, [1.0])


def test_batchnorm_eval_uses_running_stats(f64):
    bn = BatchNorm2d(1)
    bn.running_mean[...] = 2.0
    bn.running_var[...] = 4.0
    bn.eval()
    out = bn(Tensor(np.full((1, 1, 1, 1), 6.0))).data
    assert out.item() == pytest.approx(4.0 / np.sqrt(4.0 + F.BN_EPS))


def test_batchnorm_needs_two_values():
    with pytest.raises(ValueError, match="n\\*h\\*w"):
        BatchNorm2d(2)(Tensor(np.zeros((1, 2, 1, 1))))


def test_maxpool_values_and_gradient(f64):
    x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4), requires_grad=True)
    with GradientTape() as tape:
        out = F.maxpool2(x)
        loss = out.sum()
    np.testing.assert_array_equal(out.data[0, 0], [[5, 7], [13, 15]])
    tape.backward(loss)
    assert x.grad.sum() == 4 and x.grad[0, 0, 1, 1] == 1


def test_maxpool_odd_size():
    with pytest.raises(ValueError):
        F.maxpool2(Tensor(np.zeros((1, 1, 5, 4))))


def test_upsample_constant_and_shape(f64, rng):
    x = np.full((1, 2, 3, 4), 1.5)
    out = F.upsample_bilinear2(Tensor(x)).data
    assert out.shape == (1, 2, 6, 8)
    np.testing.assert_allclose(out, 1.5)


def test_upsample_half_pixel_weights(f64):
    x = np.array([[0.0, 4.0]]).reshape(1, 1, 1, 2)
    out = F.upsample_bilinear2(Tensor(x)).data[0, 0, 0]
    np.testing.assert_allclose(out, [0.0, 1.0, 3.0, 4.0])


def test_concat_and_slice(f64, rng):
    a, b = rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((1, 1, 3, 3))
    c = F.concat_channels(Tensor(a), Tensor(b))
    np.testing.assert_array_equal(F.channel_slice(c, 2, 3).data, b)
    with pytest.raises(ValueError):
        F.concat_channels(Tensor(a), Tensor(np.zeros((1, 1, 2, 3))))


def test_bce_requires_binary_target():
    with pytest.raises(ValueError, match="only 0 and 1"):
        F.bce_with_logits(Tensor(np.zeros((1, 1, 2, 2))), np.full((1, 1, 2, 2), 0.5))
