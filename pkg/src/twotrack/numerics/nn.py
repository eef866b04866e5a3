"""Module containers and the layers shared by the encoders and the decoder."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor, get_default_dtype

INIT_STD = 0.02


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, requires_grad=True, name=None):
        arr = np.array(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(get_default_dtype())
        super().__init__(arr, requires_grad=requires_grad, name=name)


def normal_init(rng, shape, std=INIT_STD):
    return Parameter(rng.normal(0.0, std, size=shape).astype(get_default_dtype()))


def zeros_init(shape):
    return Parameter(np.zeros(shape, dtype=get_default_dtype()))


def ones_init(shape):
    return Parameter(np.ones(shape, dtype=get_default_dtype()))


class Module:
    """Attribute-walking parameter container.

    Parameters are discovered from instance attributes holding a
    ``Parameter``, a ``Module``, or a list of modules.
    """

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        """Copy arrays into matching parameters; returns the loaded names."""
        params = dict(self.named_parameters())
        if strict:
            missing = sorted(set(params) - set(state))
            unexpected = sorted(set(state) - set(params))
            if missing or unexpected:
                raise KeyError(f"state mismatch: missing={missing} unexpected={unexpected}")
        loaded = []
        for name, arr in state.items():
            if name not in params:
                continue
            p = params[name]
            if tuple(p.shape) != tuple(np.shape(arr)):
                if strict:
                    raise KeyError(f"shape mismatch for {name}: {p.shape} vs {np.shape(arr)}")
                continue
            p.data = np.array(arr, dtype=p.data.dtype)
            loaded.append(name)
        return loaded

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag=True):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def to(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))


class Linear(Module):
    def __init__(self, rng, n_in, n_out, bias=True):
        self.weight = normal_init(rng, (n_in, n_out))
        self.bias = zeros_init((n_out,)) if bias else None

    def __call__(self, x):
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, width):
        self.gamma = ones_init((width,))
        self.beta = zeros_init((width,))

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta)


class Embedding(Module):
    def __init__(self, rng, vocab, width):
        self.weight = normal_init(rng, (vocab, width))

    def __call__(self, ids):
        return T.embedding(self.weight, ids)


class MultiHeadAttention(Module):
    def __init__(self, rng, width, heads, kv_width=None):
        if width % heads:
            raise ValueError(f"head count {heads} does not divide width {width}")
        kv_width = width if kv_width is None else kv_width
        self.heads = heads
        self.q = Linear(rng, width, width)
        self.k = Linear(rng, kv_width, width)
        self.v = Linear(rng, kv_width, width)
        self.o = Linear(rng, width, width)

    def _split(self, x):
        *lead, L, D = x.shape
        h = self.heads
        return x.reshape(*lead, L, h, D // h).transpose(*range(len(lead)), len(lead) + 1,
                                                         len(lead), len(lead) + 2)

    def __call__(self, x, kv=None, mask=None):
        """Returns (output, attention weights shaped (..., H, Lq, Lk))."""
        kv = x if kv is None else kv
        q, k, v = self._split(self.q(x)), self._split(self.k(kv)), self._split(self.v(kv))
        ctx = T.attention(q, k, v, mask)
        n = ctx.ndim
        merged = ctx.transpose(*range(n - 3), n - 2, n - 3, n - 1)
        out = self.o(merged.reshape(*x.shape[:-1], x.shape[-1]))
        return out, ctx.weights


class FeedForward(Module):
    def __init__(self, rng, width, mult=4):
        self.up = Linear(rng, width, mult * width)
        self.down = Linear(rng, mult * width, width)

    def __call__(self, x):
        return self.down(T.gelu(self.up(x)))


class EncoderBlock(Module):
    """Pre-norm bidirectional self-attention block."""

    def __init__(self, rng, width, heads):
        self.ln1 = LayerNorm(width)
        self.attn = MultiHeadAttention(rng, width, heads)
        self.ln2 = LayerNorm(width)
        self.ffn = FeedForward(rng, width)

    def __call__(self, x, mask=None):
        h, _ = self.attn(self.ln1(x), mask=mask)
        x = x + h
        return x + self.ffn(self.ln2(x))


def sinusoidal_positions(length, width, dtype=None):
    if width % 2:
        raise ValueError("positional width must be even")
    pos = np.arange(length)[:, None]
    i = np.arange(width // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / width)
    pe = np.zeros((length, width))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe.astype(dtype or get_default_dtype())
