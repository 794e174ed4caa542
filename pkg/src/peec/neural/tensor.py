"""Dense tensors with reverse-mode differentiation.

Operations are recorded on the active :class:`Tape` (if any) in execution
order, which is already a topological order, so :meth:`Tape.backward` just
walks the record backwards once. Outside a ``with Tape():`` block nothing is
recorded and ops are plain numpy calls.
"""

from __future__ import annotations

import os
from typing import Callable, Sequence

import numpy as np

DEBUG_FINITE = os.environ.get("PEEC_DEBUG_FINITE", "") not in ("", "0")


class ShapeError(ValueError):
    def __init__(self, op: str, a: tuple, b: tuple):
        super().__init__(f"{op}: incompatible shapes {a} and {b}")
        self.op, self.shapes = op, (a, b)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(as_tensor(o), self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records ``(output, inputs, backward_fn)`` triples while active."""

    _active: list["Tape"] = []

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        Tape._active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._active.pop()

    @classmethod
    def current(cls) -> "Tape | None":
        return cls._active[-1] if cls._active else None

    def backward(self, loss: Tensor, retain: bool = False) -> None:
        """Accumulate d(loss)/d(x) into ``x.grad`` for every recorded input.

        The tape is cleared afterwards unless ``retain`` is set.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for out, inputs, fn in reversed(self.records):
            if out.grad is None:
                continue
            grads = fn(out.grad)
            for x, g in zip(inputs, grads):
                if g is None or not x.requires_grad:
                    continue
                if DEBUG_FINITE and not np.all(np.isfinite(g)):
                    raise FloatingPointError(f"non-finite gradient flowing into {x!r}")
                x.grad = g.copy() if x.grad is None else x.grad + g
        if not retain:
            self.records.clear()


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    tape = tape or Tape.current()
    if tape is None:
        raise RuntimeError("backward called with no tape")
    tape.backward(loss)


def _record(data: np.ndarray, inputs: Sequence[Tensor], fn: Callable) -> Tensor:
    if DEBUG_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced")
    tape = Tape.current()
    needs = tape is not None and any(x.requires_grad for x in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.records.append((out, tuple(inputs), fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape == b.data.shape or b.data.ndim == 0:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _record(
        out, (a, b), lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape))
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _record(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _record(out, (a,), lambda g: (0.5 * g / out,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _record(np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def logistic(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _record(a.data * mask, (a,), lambda g: (g * mask,))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    out = np.logaddexp(0.0, ad)
    return _record(out, (a,), lambda g: (g * _sigmoid(ad),))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _record(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("minimum", a, b)
    pick_a = a.data <= b.data
    sa, sb = a.shape, b.shape
    return _record(
        np.minimum(a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * pick_a, sa), _unbroadcast(g * ~pick_a, sb)),
    )


# ---------------------------------------------------------------- structural


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return _record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x, W, b) -> Tensor:
    """Fused ``x @ W + b`` for 2-D ``x``, one tape record instead of two."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    xd, Wd = x.data, W.data
    if xd.ndim != 2 or Wd.ndim != 2 or xd.shape[1] != Wd.shape[0] or b.shape != (Wd.shape[1],):
        raise ShapeError("linear", xd.shape, Wd.shape)

    def fn(g):
        return (g @ Wd.T if x.requires_grad else None), xd.T @ g, g.sum(axis=0)

    return _record(xd @ Wd + b.data, (x, W, b), fn)


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    ax = axis % xs[0].data.ndim
    for x in xs[1:]:
        if x.data.ndim != xs[0].data.ndim or any(
            i != ax and p != q for i, (p, q) in enumerate(zip(x.shape, xs[0].shape))
        ):
            raise ShapeError("concat", xs[0].shape, x.shape)
    bounds = np.cumsum([0] + [x.shape[ax] for x in xs])

    def fn(g):
        idx = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx[ax] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return tuple(out)

    return _record(np.concatenate([x.data for x in xs], axis=ax), xs, fn)


def take(a, lo: int, hi: int) -> Tensor:
    """Columns ``lo:hi`` of the last axis."""
    a = as_tensor(a)
    if not 0 <= lo <= hi <= a.shape[-1]:
        raise ShapeError("slice", a.shape, (lo, hi))
    shape = a.shape

    def fn(g):
        full = np.zeros(shape)
        full[..., lo:hi] = g
        return (full,)

    return _record(a.data[..., lo:hi], (a,), fn)


def reshape(a, shape: tuple) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, tuple(shape)) from None
    return _record(out, (a,), lambda g: (g.reshape(old),))


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        return _record(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))
    ax = axis % len(shape)
    return _record(
        a.data.sum(axis=ax), (a,), lambda g: (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),)
    )


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return div(sum(a, axis), float(n))


def log_softmax(a) -> Tensor:
    """Row-wise log-softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    soft = np.exp(out)
    return _record(out, (a,), lambda g: (g - soft * g.sum(axis=-1, keepdims=True),))
