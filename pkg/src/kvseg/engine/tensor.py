"""Reverse-mode autodiff over numpy arrays.

A ``Tensor`` wraps an ndarray and records the backward closure of the op that
produced it. ``Tensor.backward()`` runs the tape in reverse topological order.
The op set is deliberately small: exactly what the segmenter, the losses and
the optimizer need. Analytic gradients of every op are pinned down by central
finite differences in the test suite.

Shapes follow numpy broadcasting; gradients of broadcast operands are reduced
back to the operand shape.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

from .. import accel

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (inference / target building)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    # -- metadata ----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------------

    def _make(self, data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(np.asarray(other))

    def __add__(self, other) -> "Tensor":
        o = self._coerce(other)
        out = self._make(self.data + o.data, (self, o), None)

        def bw(g):
            self._accum(_unbroadcast(g, self.data.shape))
            o._accum(_unbroadcast(g, o.data.shape))

        out._backward = bw if out.requires_grad else None
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = self._make(-self.data, (self,), None)

        def bw(g):
            self._accum(-g)

        out._backward = bw if out.requires_grad else None
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        o = self._coerce(other)
        out = self._make(self.data * o.data, (self, o), None)

        def bw(g):
            self._accum(_unbroadcast(g * o.data, self.data.shape))
            o._accum(_unbroadcast(g * self.data, o.data.shape))

        out._backward = bw if out.requires_grad else None
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        o = self._coerce(other)
        out = self._make(self.data / o.data, (self, o), None)

        def bw(g):
            self._accum(_unbroadcast(g / o.data, self.data.shape))
            o._accum(_unbroadcast(-g * self.data / (o.data * o.data), o.data.shape))

        out._backward = bw if out.requires_grad else None
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return self._coerce(other) / self

    def pow(self, exponent: float) -> "Tensor":
        out = self._make(self.data**exponent, (self,), None)

        def bw(g):
            self._accum(g * exponent * self.data ** (exponent - 1))

        out._backward = bw if out.requires_grad else None
        return out

    __pow__ = pow

    def __matmul__(self, other) -> "Tensor":
        o = self._coerce(other)
        out = self._make(self.data @ o.data, (self, o), None)

        def bw(g):
            a, b = self.data, o.data
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            self._accum(_unbroadcast(ga, a.shape))
            o._accum(_unbroadcast(gb, b.shape))

        out._backward = bw if out.requires_grad else None
        return out

    # -- elementwise ----------------------------------------------------------

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        out = self._make(y, (self,), None)

        def bw(g):
            self._accum(g * y)

        out._backward = bw if out.requires_grad else None
        return out

    def log(self) -> "Tensor":
        out = self._make(np.log(self.data), (self,), None)

        def bw(g):
            self._accum(g / self.data)

        out._backward = bw if out.requires_grad else None
        return out

    def sqrt(self) -> "Tensor":
        y = np.sqrt(self.data)
        out = self._make(y, (self,), None)

        def bw(g):
            self._accum(g * 0.5 / y)

        out._backward = bw if out.requires_grad else None
        return out

    def sigmoid(self) -> "Tensor":
        # Stable two-sided formulation.
        x = self.data
        y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        y = y.astype(x.dtype)
        out = self._make(y, (self,), None)

        def bw(g):
            self._accum(g * y * (1.0 - y))

        out._backward = bw if out.requires_grad else None
        return out

    def silu(self) -> "Tensor":
        s = self.sigmoid().data
        y = self.data * s
        out = self._make(y, (self,), None)

        def bw(g):
            self._accum(g * (s + self.data * s * (1.0 - s)))

        out._backward = bw if out.requires_grad else None
        return out

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = self._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), None)

        def bw(g):
            if axis is None:
                self._accum(np.broadcast_to(g, self.data.shape).copy())
                return
            gg = g
            if not keepdims:
                gg = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(gg, self.data.shape).copy())

        out._backward = bw if out.requires_grad else None
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- shape ops ---------------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self._make(self.data.reshape(shape), (self,), None)

        def bw(g):
            self._accum(g.reshape(self.data.shape))

        out._backward = bw if out.requires_grad else None
        return out

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        out = self._make(self.data.transpose(axes), (self,), None)

        def bw(g):
            self._accum(g.transpose(inv))

        out._backward = bw if out.requires_grad else None
        return out

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, idx) -> "Tensor":
        out = self._make(self.data[idx], (self,), None)

        def bw(g):
            buf = np.zeros_like(self.data)
            np.add.at(buf, idx, g)
            self._accum(buf)

        out._backward = bw if out.requires_grad else None
        return out


# -- free functions -------------------------------------------------------------


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [Tensor._coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    out = ts[0]._make(data, ts, None)

    def bw(g):
        start = 0
        for t in ts:
            n = t.data.shape[axis]
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + n)
            t._accum(g[tuple(sl)])
            start += n

    out._backward = bw if out.requires_grad else None
    return out


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    expanded = [t.reshape(t.shape[:axis] + (1,) + t.shape[axis:]) for t in ts]
    return concat(expanded, axis=axis)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x - np.max(x.data, axis=axis, keepdims=True)
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    m = np.max(x.data, axis=axis, keepdims=True)
    out = (x - m).exp().sum(axis=axis, keepdims=True).log() + m
    if not keepdims:
        out = out.reshape(tuple(np.delete(out.shape, axis)))
    return out


def upsample2_nearest(x: Tensor) -> Tensor:
    """[C, H, W] -> [C, 2H, 2W] nearest-neighbor."""
    c, h, w = x.shape
    data = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)
    out = x._make(data, (x,), None)

    def bw(g):
        x._accum(g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)))

    out._backward = bw if out.requires_grad else None
    return out


def bilinear_matrix(out_len: int, in_len: int) -> np.ndarray:
    """[out_len, in_len] interpolation weights, half-pixel centres, clamped."""
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / out_len) - 0.5
    src = np.clip(src, 0.0, in_len - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_len - 1)
    t = src - lo
    mat = np.zeros((out_len, in_len))
    np.add.at(mat, (np.arange(out_len), lo), 1.0 - t)
    np.add.at(mat, (np.arange(out_len), hi), t)
    return mat


def upsample_bilinear(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    """[C, H, W] -> [C, oh, ow] separable bilinear interpolation."""
    _, h, w = x.shape
    oh, ow = out_hw
    rows = bilinear_matrix(oh, h)
    cols_t = bilinear_matrix(ow, w).T
    out = x._make(rows @ x.data @ cols_t, (x,), None)

    def bw(g):
        x._accum(rows.T @ g @ cols_t.T)

    out._backward = bw if out.requires_grad else None
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution on a [Cin, H, W] map via im2col; returns [Cout, Ho, Wo]."""
    cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ValueError(f"conv2d channel mismatch: input {cin} vs weight {cin_w}")
    cols = accel.im2col(x.data, kh, kw, stride, pad)
    wmat = weight.data.reshape(cout, cin * kh * kw)
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    y = wmat @ cols
    if bias is not None:
        y = y + bias.data[:, None]
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = x._make(y.reshape(cout, ho, wo), parents, None)

    def bw(g):
        gmat = g.reshape(cout, ho * wo)
        weight._accum((gmat @ cols.T).reshape(weight.data.shape))
        if bias is not None:
            bias._accum(gmat.sum(axis=1))
        gcols = wmat.T @ gmat
        x._accum(accel.col2im(gcols, cin, h, w, kh, kw, stride, pad))

    out._backward = bw if out.requires_grad else None
    return out
