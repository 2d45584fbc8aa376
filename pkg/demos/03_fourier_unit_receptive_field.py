"""
Image-wide receptive field of the Fourier unit
==============================================

Perturb one input pixel and count how many outputs move.  A 3x3 conv
touches a 3x3 patch.  A Fourier unit touches nearly every pixel, because
its activation acts on spectral coefficients.  Without normalization and
activation the unit is linear with one mixing matrix for all
frequencies, and the response collapses back to a couple of rows.
"""
import numpy as np

from ucfnet.autograd import Tensor, precision
from ucfnet.ffc import FfcLayer, FourierUnit
from ucfnet.nn import Conv2d


def changed(layer, x, where):
    x2 = x.copy()
    x2[where] += 1.0
    d = np.abs(layer(Tensor(x2)).data - layer(Tensor(x)).data)
    return (d > 1e-12).any(axis=1).mean()


with precision("float64"):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 32, 32))
    where = (0, 0, 9, 20)
    print(f"3x3 conv:              {100 * changed(Conv2d(2, 2, 3, rng=rng), x, where):6.2f}% of pixels")
    print(f"Fourier unit:          {100 * changed(FourierUnit(2, rng=rng), x, where):6.2f}% of pixels")
    print(f"linear Fourier unit:   {100 * changed(FourierUnit(2, rng=rng, bypass_norm_act=True), x, where):6.2f}% of pixels")

    # an FFC layer keeps half the channels local and sends half through the Fourier unit
    layer = FfcLayer(8, alpha=0.5, rng=rng)
    out = layer(Tensor(rng.standard_normal((2, 8, 16, 16))))
    print("FFC layer output:", out.shape)
