"""Tape-based reverse-mode differentiation over numpy arrays.

Every differentiable operation computes its forward value eagerly and, when a
:class:`GradientTape` is active and one of its inputs requires a gradient,
appends a record ``(output, inputs, backward_fn)`` to the tape.  Calling
:meth:`GradientTape.backward` replays those records in reverse execution order.
Without an active tape nothing is recorded, which is how inference runs.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

_DTYPE = np.dtype(np.float32)
_TAPES: list["GradientTape"] = []


def default_dtype() -> np.dtype:
    return _DTYPE


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DTYPE = dtype


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default floating dtype (``float64`` for verification)."""
    old = _DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


def current_tape() -> "GradientTape | None":
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """Dense array value that can take part in differentiation.

    Images, features and masks are 4-D ``(n, c, h, w)`` arrays; losses are
    0-d; biases and normalization affine terms are 1-d.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if not np.iscomplexobj(arr) and arr.dtype != _DTYPE:
            arr = arr.astype(_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._interior = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self):
        return tmean(self)


class Parameter(Tensor):
    """Trainable tensor with a name and an accumulated gradient."""

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, copy=True), requires_grad=True, name=name)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)


class GradientTape:
    """Ordered record of executed differentiable operations.

    Use as a context manager around the forward pass, then call
    :meth:`backward` on a scalar produced inside it.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple, Callable]] = []

    def __enter__(self) -> "GradientTape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def record(self, out: Tensor, inputs: tuple, backward_fn: Callable) -> None:
        out.requires_grad = True
        out._interior = True
        self.records.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def backward(loss: Tensor, tape: GradientTape) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring a gradient.

    Repeated calls accumulate.  Raises ``ValueError`` if ``loss`` is not a
    scalar or was not produced on ``tape``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not any(rec[0] is loss for rec in reversed(tape.records)):
        raise ValueError("loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gt in zip(inputs, fn(g)):
            if gt is None or not isinstance(t, Tensor) or not t.requires_grad:
                continue
            if t._interior:
                prev = grads.get(id(t))
                grads[id(t)] = gt if prev is None else prev + gt
            elif t.grad is None:
                t.grad = np.array(gt, dtype=t.data.dtype, copy=True)
            else:
                t.grad = t.grad + gt


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, inputs: Sequence, backward_fn: Callable) -> Tensor:
    """Wrap ``data`` and record it on the active tape if any input needs a gradient."""
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        tape.record(out, tuple(inputs), backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _operands(a, b):
    a_t, b_t = isinstance(a, Tensor), isinstance(b, Tensor)
    av = a.data if a_t else np.asarray(a, dtype=_DTYPE) if not np.isscalar(a) else a
    bv = b.data if b_t else np.asarray(b, dtype=_DTYPE) if not np.isscalar(b) else b
    return av, bv


def add(a, b) -> Tensor:
    av, bv = _operands(a, b)
    sa, sb = np.shape(av), np.shape(bv)
    return make_result(av + bv, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    av, bv = _operands(a, b)
    sa, sb = np.shape(av), np.shape(bv)
    return make_result(av - bv, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    av, bv = _operands(a, b)
    sa, sb = np.shape(av), np.shape(bv)
    return make_result(
        av * bv, (a, b), lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb))
    )


def div(a, b) -> Tensor:
    av, bv = _operands(a, b)
    sa, sb = np.shape(av), np.shape(bv)
    out = av / bv
    return make_result(
        out, (a, b), lambda g: (_unbroadcast(g / bv, sa), _unbroadcast(-g * out / bv, sb))
    )


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), bw)


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    shape = x.shape
    return make_result(
        np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, g / n, dtype=x.dtype),)
    )


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))
