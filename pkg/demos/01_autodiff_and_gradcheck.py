"""
Tape autodiff and finite-difference checks
==========================================

Operations record themselves on an active ``GradientTape``; ``backward``
replays the tape in reverse.  ``finite_diff_check`` compares the result with
central differences and needs 64-bit mode.
"""
import numpy as np

from ucfnet import functional as F
from ucfnet.autograd import GradientTape, Tensor, precision
from ucfnet.gradcheck import finite_diff_check
from ucfnet.verification import format_table, run_gradient_suite

# a small conv -> sigmoid chain, differentiated by hand-written backward rules
with precision("float64"):
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((1, 2, 5, 5)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    with GradientTape() as tape:
        loss = F.sigmoid(F.conv2d(x, w, padding=1)).sum()
    tape.backward(loss)
    print("loss", loss.item(), "| dL/dw shape", w.grad.shape)

    # the same gradient, checked against (f(x + eps) - f(x - eps)) / (2 eps)
    report = finite_diff_check(lambda: F.sigmoid(F.conv2d(x, w, padding=1)).sum(), {"x": x, "w": w},
                               label="sigmoid(conv)")
    print(report.summary())

# the registry behind `ucfnet gradcheck`: every operator, always at 64-bit
print(format_table(run_gradient_suite()))
