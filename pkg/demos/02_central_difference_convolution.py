"""
Central difference convolution
==============================

A CDC layer mixes a plain convolution with a neighbour-minus-centre term,
weighted by ``theta``.  Algebraically that is one convolution whose centre
tap loses ``theta * sum(w)``; the window-by-window reference confirms it.
"""
import numpy as np

from ucfnet.autograd import Tensor, precision
from ucfnet.cdc import CdcLayer, cdc_brute, cdc_forward

with precision("float64"):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 8, 8))
    for theta in (0.0, 0.25, 0.5, 0.7, 1.0):
        layer = CdcLayer(3, 4, theta=theta, rng=rng)
        diff = np.abs(cdc_forward(Tensor(x), layer).data - cdc_brute(x, layer)).max()
        print(f"theta={theta:4.2f}  max |fast - brute| = {diff:.1e}")

    # theta = 1 responds only to contrast: an impulse under an all-ones kernel gives 1 - 9 = -8
    layer = CdcLayer(1, 1, theta=1.0, rng=rng, bias=False)
    layer.weight.data = np.ones((1, 1, 3, 3))
    impulse = np.zeros((1, 1, 5, 5))
    impulse[0, 0, 2, 2] = 1.0
    print(cdc_forward(Tensor(impulse), layer).data[0, 0])

    # flat regions vanish, so small bright points stand out
    flat = np.full((1, 1, 5, 5), 3.0)
    print("flat interior:", cdc_forward(Tensor(flat), layer).data[0, 0, 1:-1, 1:-1].ravel())
