"""Small module system on top of the autodiff tensor.

Parameters register themselves by attribute name; ``Module.parameters()``
walks the tree and yields dotted paths, which double as checkpoint keys.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Tensor, concat, conv2d, softmax


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.asarray(data), requires_grad=True)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield (f"{prefix}{name}", p)
        for name, child in self._children.items():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place (float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, m: Module) -> None:
        self._children[str(len(self._items))] = m
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _xavier(fan_in: int, fan_out: int, shape, rng: np.random.Generator, dtype) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True, dtype=np.float32, zero_init: bool = False):
        super().__init__()
        if zero_init:
            w = np.zeros((in_dim, out_dim), dtype=dtype)
        else:
            w = _xavier(in_dim, out_dim, (in_dim, out_dim), rng, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv2d(Module):
    """Convolution on [Cin, H, W] maps (batch-free; frames are processed one at a time)."""

    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator, stride: int = 1, pad: int = 0, dtype=np.float32):
        super().__init__()
        fan_in = cin * k * k
        fan_out = cout * k * k
        self.weight = Parameter(_xavier(fan_in, fan_out, (cout, cin, k, k), rng, dtype))
        self.bias = Parameter(np.zeros(cout, dtype=dtype))
        self.stride = stride
        self.pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float32, eps: float = 1e-5):
        super().__init__()
        self.gain = Parameter(np.ones(dim, dtype=dtype))
        self.shift = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps).sqrt() * self.gain + self.shift


class MultiheadAttention(Module):
    """Standard scaled dot-product attention over row sets ([N, C] inputs)."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.proj_q = Linear(dim, dim, rng, dtype=dtype)
        self.proj_k = Linear(dim, dim, rng, dtype=dtype)
        self.proj_v = Linear(dim, dim, rng, dtype=dtype)
        self.proj_out = Linear(dim, dim, rng, dtype=dtype)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        """key_mask: bool [M]; False rows are excluded from attention."""
        n = query.shape[0]
        m = key.shape[0]
        q = self.proj_q(query).reshape(n, self.heads, self.head_dim).transpose(1, 0, 2)
        k = self.proj_k(key).reshape(m, self.heads, self.head_dim).transpose(1, 0, 2)
        v = self.proj_v(value).reshape(m, self.heads, self.head_dim).transpose(1, 0, 2)
        scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(self.head_dim))
        if key_mask is not None:
            bias = np.where(key_mask[None, None, :], 0.0, -1e9).astype(scores.dtype)
            scores = scores + bias
        attn = softmax(scores, axis=-1)
        mixed = (attn @ v).transpose(1, 0, 2).reshape(n, self.dim)
        return self.proj_out(mixed)


class FFN(Module):
    """Pre-norm residual feed-forward block: x + W2 silu(W1 LN(x))."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.norm = LayerNorm(dim, dtype=dtype)
        self.lin1 = Linear(dim, hidden, rng, dtype=dtype)
        self.lin2 = Linear(hidden, dim, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.lin2(self.lin1(self.norm(x)).silu())


class MLP(Module):
    """Plain stack of Linear+SiLU with a linear last layer."""

    def __init__(self, dims: list[int], rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.layers = ModuleList([Linear(dims[i], dims[i + 1], rng, dtype=dtype) for i in range(len(dims) - 1)])

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = x.silu()
        return x
