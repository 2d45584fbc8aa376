"""Registry of finite-difference gradient checks over every differentiable operator.

Each case builds small float64 inputs and a scalar objective.  Objectives
project outputs onto a fixed random tensor (``sum(out * r)``) so that every
output coordinate contributes a distinct weight to the gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import functional as F
from .autograd import Tensor, precision
from .cdc import CdcLayer
from .ffc import FfcLayer, FfcResidualBlock, FourierUnit
from .gradcheck import CheckReport, GradEntry, finite_diff_check
from .losses import bce_loss, soft_iou_loss
from .model import UcfConfig, UcfModel
from .nn import BatchNorm2d

# (objective, inputs) built inside 64-bit mode
CaseBuilder = Callable[[np.random.Generator], tuple[Callable[[], Tensor], dict]]


@dataclass
class GradCase:
    name: str
    build: CaseBuilder
    max_coords: int | None = None


def _project(out: Tensor, rng: np.random.Generator) -> Tensor:
    r = Tensor(rng.standard_normal(out.shape))
    return (out * r).sum()


def _away_from_zero(rng, shape, margin=0.1):
    # keeps ReLU inputs off the kink by more than the step size
    return rng.choice([-1.0, 1.0], size=shape) * (margin + rng.random(shape))


def _conv2d(rng):
    x = Tensor(rng.standard_normal((2, 3, 6, 6)))
    w = Tensor(rng.standard_normal((4, 3, 3, 3)))
    b = Tensor(rng.standard_normal(4))
    r = rng.standard_normal((2, 4, 6, 6))
    return lambda: (F.conv2d(x, w, b, padding=1) * Tensor(r)).sum(), {"x": x, "weight": w, "bias": b}


def _conv2d_strided(rng):
    x = Tensor(rng.standard_normal((1, 2, 7, 7)))
    w = Tensor(rng.standard_normal((3, 2, 3, 3)))
    r = rng.standard_normal((1, 3, 3, 3))
    return lambda: (F.conv2d(x, w, stride=2, padding=0) * Tensor(r)).sum(), {"x": x, "weight": w}


def _cdc(rng):
    layer = CdcLayer(3, 4, theta=0.7, rng=rng)
    x = Tensor(rng.standard_normal((2, 3, 6, 6)))
    r = rng.standard_normal((2, 4, 6, 6))
    return lambda: (layer(x) * Tensor(r)).sum(), {"x": x, "weight": layer.weight, "bias": layer.bias}


def _fourier_unit(rng):
    fu = FourierUnit(2, rng=rng)
    x = Tensor(rng.standard_normal((2, 2, 6, 6)))
    r = rng.standard_normal((2, 2, 6, 6))
    return lambda: (fu(x) * Tensor(r)).sum(), {"x": x, "conv.weight": fu.conv.weight,
                                               "bn.gamma": fu.bn.gamma, "bn.beta": fu.bn.beta}


def _fourier_unit_odd(rng):
    # odd width exercises the unpaired Nyquist-free spectrum column layout
    fu = FourierUnit(1, rng=rng, bypass_norm_act=True)
    x = Tensor(rng.standard_normal((1, 1, 5, 7)))
    r = rng.standard_normal((1, 1, 5, 7))
    return lambda: (fu(x) * Tensor(r)).sum(), {"x": x, "conv.weight": fu.conv.weight}


def _ffc_layer(rng):
    layer = FfcLayer(4, rng=rng)
    x = Tensor(rng.standard_normal((2, 4, 6, 6)))
    r = rng.standard_normal((2, 4, 6, 6))
    params = {n: p for n, p in layer.named_parameters()}
    return lambda: (layer(x) * Tensor(r)).sum(), {"x": x, **params}


def _ffc_block(rng):
    block = FfcResidualBlock(4, rng=rng)
    x = Tensor(rng.standard_normal((2, 4, 4, 4)))
    r = rng.standard_normal((2, 4, 4, 4))
    params = {n: p for n, p in block.named_parameters()}
    return lambda: (block(x) * Tensor(r)).sum(), {"x": x, **params}


def _batchnorm(rng):
    bn = BatchNorm2d(3)
    bn.gamma.data = rng.standard_normal(3)
    bn.beta.data = rng.standard_normal(3)
    x = Tensor(rng.standard_normal((2, 3, 4, 4)))
    r = rng.standard_normal((2, 3, 4, 4))
    return lambda: (bn(x) * Tensor(r)).sum(), {"x": x, "gamma": bn.gamma, "beta": bn.beta}


def _batchnorm_eval(rng):
    bn = BatchNorm2d(3)
    bn.running_mean[...] = rng.standard_normal(3)
    bn.running_var[...] = 0.5 + rng.random(3)
    bn.eval()
    x = Tensor(rng.standard_normal((2, 3, 4, 4)))
    r = rng.standard_normal((2, 3, 4, 4))
    return lambda: (bn(x) * Tensor(r)).sum(), {"x": x, "gamma": bn.gamma, "beta": bn.beta}


def _relu(rng):
    x = Tensor(_away_from_zero(rng, (2, 3, 5, 5)))
    r = rng.standard_normal((2, 3, 5, 5))
    return lambda: (F.relu(x) * Tensor(r)).sum(), {"x": x}


def _sigmoid(rng):
    x = Tensor(3 * rng.standard_normal((2, 3, 5, 5)))
    r = rng.standard_normal((2, 3, 5, 5))
    return lambda: (F.sigmoid(x) * Tensor(r)).sum(), {"x": x}


def _maxpool(rng):
    # distinct values spaced well beyond eps, so the argmax never flips
    x = Tensor(rng.permutation(2 * 2 * 6 * 6).reshape(2, 2, 6, 6) * 0.01)
    r = rng.standard_normal((2, 2, 3, 3))
    return lambda: (F.maxpool2(x) * Tensor(r)).sum(), {"x": x}


def _upsample(rng):
    x = Tensor(rng.standard_normal((2, 2, 3, 4)))
    r = rng.standard_normal((2, 2, 6, 8))
    return lambda: (F.upsample_bilinear2(x) * Tensor(r)).sum(), {"x": x}


def _concat(rng):
    a = Tensor(rng.standard_normal((2, 2, 3, 3)))
    b = Tensor(rng.standard_normal((2, 3, 3, 3)))
    r = rng.standard_normal((2, 5, 3, 3))
    return lambda: (F.concat_channels(a, b) * Tensor(r)).sum(), {"a": a, "b": b}


def _bce(rng):
    z = Tensor(2 * rng.standard_normal((2, 1, 4, 4)))
    y = (rng.random((2, 1, 4, 4)) < 0.3).astype(np.float64)
    return lambda: bce_loss(z, y), {"logits": z}


def _soft_iou(rng):
    z = Tensor(rng.standard_normal((2, 1, 4, 4)))
    y = (rng.random((2, 1, 4, 4)) < 0.3).astype(np.float64)
    return lambda: soft_iou_loss(F.sigmoid(z), y), {"logits": z}


def _tiny_model(rng):
    # depth 3 keeps the 16x16 input's bottleneck at 2x2 so batch norm has > 1 value per channel
    cfg = UcfConfig(base_width=4, depth=3, theta=0.7, n_ffc_blocks=1)
    model = UcfModel(cfg, seed=int(rng.integers(1 << 31)))
    x = Tensor(rng.standard_normal((1, 1, 16, 16)))
    r = rng.standard_normal((1, 1, 16, 16))
    params = {n: p for n, p in model.named_parameters()}
    return lambda: (model(x) * Tensor(r)).sum(), {"x": x, **params}


GRADIENT_CASES: dict[str, GradCase] = {c.name: c for c in [
    GradCase("conv2d", _conv2d),
    GradCase("conv2d_stride2", _conv2d_strided),
    GradCase("cdc", _cdc),
    GradCase("fourier_unit", _fourier_unit),
    GradCase("fourier_unit_odd_width", _fourier_unit_odd),
    GradCase("ffc_layer", _ffc_layer),
    GradCase("ffc_residual_block", _ffc_block),
    GradCase("batchnorm_train", _batchnorm),
    GradCase("batchnorm_eval", _batchnorm_eval),
    GradCase("relu", _relu),
    GradCase("sigmoid", _sigmoid),
    GradCase("maxpool2", _maxpool),
    GradCase("upsample_bilinear2", _upsample),
    GradCase("concat_channels", _concat),
    GradCase("bce", _bce),
    GradCase("soft_iou", _soft_iou),
    GradCase("ucf_model_tiny", _tiny_model, max_coords=24),
]}


def run_gradient_suite(cases: dict[str, GradCase] | None = None, *, eps: float = 1e-5,
                       tol_rel: float = 1e-4, seed: int = 0) -> list[CheckReport]:
    """Run every case in 64-bit mode, whatever the caller's precision."""
    cases = GRADIENT_CASES if cases is None else cases
    reports = []
    with precision("float64"):
        for i, (name, case) in enumerate(cases.items()):
            rng = np.random.default_rng([seed, i])
            try:
                f, inputs = case.build(rng)
                rep = finite_diff_check(f, inputs, eps, tol_rel, label=name,
                                        max_coords=case.max_coords, seed=seed)
            except Exception as exc:  # a crashing case is a failing case, reported by name
                rep = CheckReport(name, tol_rel, eps, [GradEntry("<build>", float("inf"), 0,
                                                                 error=f"{type(exc).__name__}: {exc}")])
            reports.append(rep)
    return reports


def format_table(reports: list[CheckReport]) -> str:
    width = max(len(r.label) for r in reports)
    lines = [f"{'operator':<{width}}  {'max rel err':>12}  result"]
    for r in reports:
        lines.append(f"{r.label:<{width}}  {r.max_rel_err:>12.3e}  {'PASS' if r.passed else 'FAIL'}")
        for e in r.failures():
            lines.append(f"{'':<{width}}    {e.name}: {e.error or f'rel err {e.max_rel_err:.2e} at {e.worst_index}'}")
    return "\n".join(lines)
