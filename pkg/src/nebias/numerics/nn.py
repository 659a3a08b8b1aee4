"""Attention and transformer building blocks over the autodiff Tensor.

Modules register their parameters into a shared ParameterSet under dotted
names, which gives checkpoints, freezing, and gradient checks one flat
namespace to work with. All layers are pre-norm residual blocks.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, embedding, layer_norm, masked_softmax

__all__ = [
    "ParameterSet",
    "Linear",
    "LayerNorm",
    "FeedForward",
    "MultiHeadAttention",
    "TransformerEncoderLayer",
    "TransformerDecoderLayer",
    "Adam",
    "sinusoidal_positions",
    "causal_mask",
    "xavier",
]


def xavier(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, size=(d_in, d_out))


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    """Standard fixed sin/cos position table, shape (length, d)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (i // 2) / d)
    table = np.zeros((length, d), dtype=np.float64)
    table[:, 0::2] = np.sin(angle[:, 0::2])
    table[:, 1::2] = np.cos(angle[:, 1::2])
    return table


def causal_mask(length: int) -> np.ndarray:
    """Boolean (length, length) mask, True where query may attend (k <= q)."""
    idx = np.arange(length)
    return idx[None, :] <= idx[:, None]


class ParameterSet:
    """Named map of trainable tensors with per-parameter trainable flags."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, data, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = data if isinstance(data, Tensor) else Tensor(data, requires_grad=True)
        t.requires_grad = True
        self._params[name] = t
        self._trainable[name] = bool(trainable)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def trainable_items(self):
        return [(n, t) for n, t in self._params.items() if self._trainable[n]]

    def set_trainable(self, flag: bool, prefix: str = ""):
        """Set the trainable flag for every parameter whose name starts with prefix."""
        for name in self._params:
            if name.startswith(prefix):
                self._trainable[name] = bool(flag)

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        if missing:
            raise ValueError(f"state dict missing parameters: {sorted(missing)[:5]}")
        for n, t in self._params.items():
            arr = np.asarray(state[n], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {n}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()

    def n_values(self) -> int:
        return sum(t.data.size for t in self._params.values())


class Linear:
    def __init__(self, params: ParameterSet, name: str, d_in: int, d_out: int, rng, bias: bool = True):
        self.w = params.add(f"{name}.w", xavier(rng, d_in, d_out))
        self.b = params.add(f"{name}.b", np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.w
        return y + self.b if self.b is not None else y


class LayerNorm:
    def __init__(self, params: ParameterSet, name: str, d: int, eps: float = 1e-5):
        self.gamma = params.add(f"{name}.gamma", np.ones(d))
        self.beta = params.add(f"{name}.beta", np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward:
    """Position-wise GELU MLP."""

    def __init__(self, params: ParameterSet, name: str, d: int, d_hidden: int, rng):
        self.lin1 = Linear(params, f"{name}.lin1", d, d_hidden, rng)
        self.lin2 = Linear(params, f"{name}.lin2", d_hidden, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(self.lin1(x).gelu())


class MultiHeadAttention:
    """Scaled dot-product attention with a boolean allow-mask.

    Query/key/value are (..., L, d); the mask broadcasts to (..., Lq, Lk) with
    True meaning "may attend". Masked keys receive exactly zero weight; a query
    row with every key masked is a hard error, never a NaN.
    """

    def __init__(self, params: ParameterSet, name: str, d: int, heads: int, rng,
                 relative_bias_max: int | None = None):
        if d % heads != 0:
            raise ValueError(f"model dim {d} not divisible by heads {heads}")
        self.d = d
        self.heads = heads
        self.d_head = d // heads
        self.wq = Linear(params, f"{name}.wq", d, d, rng)
        # key bias is redundant (softmax is shift-invariant per query row)
        self.wk = Linear(params, f"{name}.wk", d, d, rng, bias=False)
        self.wv = Linear(params, f"{name}.wv", d, d, rng)
        self.wo = Linear(params, f"{name}.wo", d, d, rng)
        # T5-style per-head distance bias: positional attention without
        # injecting position vectors into the residual stream
        self.rel_bias_max = relative_bias_max
        self.rel_bias = (
            params.add(f"{name}.rel_bias", np.zeros((relative_bias_max + 1, heads)))
            if relative_bias_max is not None else None
        )

    def _split(self, x: Tensor) -> Tensor:
        # (..., L, d) -> (..., h, L, d_head)
        L = x.shape[-2]
        shape = x.shape[:-2] + (L, self.heads, self.d_head)
        axes = tuple(range(len(shape)))
        perm = axes[:-3] + (axes[-2], axes[-3], axes[-1])
        return x.reshape(shape).transpose(perm)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor, mask=None, weights_out=None) -> Tensor:
        if query.shape[-1] != self.d or key.shape[-1] != self.d or value.shape[-1] != self.d:
            raise ValueError(f"attention inputs must have model dim {self.d}")
        if key.shape[-2] != value.shape[-2]:
            raise ValueError(f"key/value length mismatch: {key.shape} vs {value.shape}")
        q = self._split(self.wq(query))
        k = self._split(self.wk(key))
        v = self._split(self.wv(value))
        scores = (q @ k.transpose(tuple(range(q.ndim - 2)) + (q.ndim - 1, q.ndim - 2))) * (1.0 / math.sqrt(self.d_head))
        if self.rel_bias is not None:
            lq, lk = query.shape[-2], key.shape[-2]
            dist = np.minimum(np.abs(np.arange(lq)[:, None] - np.arange(lk)[None, :]), self.rel_bias_max)
            scores = scores + embedding(self.rel_bias, dist).transpose((2, 0, 1))
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            # broadcast (Lq, Lk) over heads and any batch dims
            mask = np.broadcast_to(mask, scores.shape)
        attn = masked_softmax(scores, mask)
        if weights_out is not None:
            weights_out.append(attn.data.copy())
        ctx = attn @ v
        # (..., h, Lq, d_head) -> (..., Lq, d)
        axes = tuple(range(ctx.ndim))
        perm = axes[:-3] + (axes[-2], axes[-3], axes[-1])
        merged = ctx.transpose(perm).reshape(ctx.shape[:-3] + (ctx.shape[-2], self.d))
        return self.wo(merged)


class TransformerEncoderLayer:
    """Pre-norm residual block: x + MHA(LN(x)) followed by x + FFN(LN(x))."""

    def __init__(self, params: ParameterSet, name: str, d: int, heads: int, d_ff: int, rng,
                 relative_bias_max: int | None = None):
        self.ln1 = LayerNorm(params, f"{name}.ln1", d)
        self.attn = MultiHeadAttention(params, f"{name}.attn", d, heads, rng,
                                       relative_bias_max=relative_bias_max)
        self.ln2 = LayerNorm(params, f"{name}.ln2", d)
        self.ffn = FeedForward(params, f"{name}.ffn", d, d_ff, rng)

    def __call__(self, x: Tensor, mask=None, weights_out=None) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, h, mask, weights_out=weights_out)
        return x + self.ffn(self.ln2(x))


class TransformerDecoderLayer:
    """Pre-norm decoder block: causal self-attention, cross-attention, FFN."""

    def __init__(self, params: ParameterSet, name: str, d: int, heads: int, d_ff: int, rng):
        self.ln1 = LayerNorm(params, f"{name}.ln1", d)
        self.self_attn = MultiHeadAttention(params, f"{name}.self_attn", d, heads, rng)
        self.ln2 = LayerNorm(params, f"{name}.ln2", d)
        self.cross_attn = MultiHeadAttention(params, f"{name}.cross_attn", d, heads, rng)
        self.ln3 = LayerNorm(params, f"{name}.ln3", d)
        self.ffn = FeedForward(params, f"{name}.ffn", d, d_ff, rng)

    def __call__(self, x: Tensor, enc_out: Tensor, self_mask=None, cross_mask=None,
                 enc_keys: Tensor | None = None) -> Tensor:
        h = self.ln1(x)
        x = x + self.self_attn(h, h, h, self_mask)
        keys = enc_keys if enc_keys is not None else enc_out
        x = x + self.cross_attn(self.ln2(x), keys, enc_out, cross_mask)
        return x + self.ffn(self.ln3(x))


class Adam:
    """Adam over the trainable subset of a ParameterSet. Frozen entries get zero updates."""

    def __init__(self, params: ParameterSet, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float = 1.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self):
        self.t += 1
        if self.max_grad_norm:
            total = np.sqrt(sum(
                float((p.grad**2).sum())
                for _, p in self.params.trainable_items() if p.grad is not None))
            if total > self.max_grad_norm:
                scale = self.max_grad_norm / total
                for _, p in self.params.trainable_items():
                    if p.grad is not None:
                        p.grad *= scale
        for name, p in self.params.trainable_items():
            if p.grad is None:
                continue
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.b1
            m += (1 - self.b1) * p.grad
            v *= self.b2
            v += (1 - self.b2) * p.grad**2
            mhat = m / (1 - self.b1**self.t)
            vhat = v / (1 - self.b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        self.params.zero_grad()
