"""Dense float64 tensors with reverse-mode automatic differentiation.

Tensors wrap row-major numpy arrays and are immutable after construction.
Every op validates that its output is finite (no silent NaN/Inf propagation);
gradients are accumulated into ``.grad`` as plain numpy arrays by ``backward``.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "MaskedRowError",
    "concat",
    "stack",
    "embedding",
    "masked_softmax",
    "layer_norm",
    "bce_with_logits",
    "set_finite_checks",
]

_CHECK_FINITE = True
_GRAD_ENABLED = True


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class no_grad:
    """Context manager: tensors created inside carry no autodiff graph."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class MaskedRowError(ValueError):
    """A softmax row had no allowed keys (fully masked attention row)."""


def set_finite_checks(enabled: bool) -> bool:
    """Toggle per-op finiteness validation. Returns the previous setting."""
    global _CHECK_FINITE
    prev = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    return prev


def _validate(arr: np.ndarray, op: str) -> np.ndarray:
    if _CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (reverses numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A float64 array node in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        _validate(arr, _op)
        self.data = arr
        if _GRAD_ENABLED:
            self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        else:
            self.requires_grad = False
        self.grad = None
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from a scalar. Accumulates into ``.grad``."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.data.shape}")
        # iterative topological order (graphs can be thousands of nodes deep)
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- arithmetic ----------------------------------------------------

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))

    def __add__(self, other):
        other = self._lift(other)
        out = Tensor(self.data + other.data, _parents=(self, other), _op="add")

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,), _op="neg")
        out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, other):
        other = self._lift(other)
        out = Tensor(self.data * other.data, _parents=(self, other), _op="mul")

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        with np.errstate(all="ignore"):
            out = Tensor(self.data / other.data, _parents=(self, other), _op="div")

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / other.data**2, other.data.shape))

        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, p: float):
        with np.errstate(all="ignore"):
            out = Tensor(self.data**p, _parents=(self,), _op="pow")
        out._backward = lambda g: self._accumulate(g * p * self.data ** (p - 1))
        return out

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError(f"matmul requires >=2-D operands, got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
        out = Tensor(np.matmul(a, b), _parents=(self, other), _op="matmul")

        def bwd(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(b, -1, -2))
                self._accumulate(_unbroadcast(ga, a.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(a, -1, -2), g)
                other._accumulate(_unbroadcast(gb, b.shape))

        out._backward = bwd
        return out

    # -- elementwise nonlinearities -------------------------------------

    def exp(self):
        with np.errstate(all="ignore"):
            out = Tensor(np.exp(self.data), _parents=(self,), _op="exp")
        out._backward = lambda g: self._accumulate(g * out.data)
        return out

    def log(self):
        with np.errstate(all="ignore"):
            out = Tensor(np.log(self.data), _parents=(self,), _op="log")
        out._backward = lambda g: self._accumulate(g / self.data)
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), _parents=(self,), _op="tanh")
        out._backward = lambda g: self._accumulate(g * (1.0 - out.data**2))
        return out

    def sigmoid(self):
        x = self.data
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = Tensor(s, _parents=(self,), _op="sigmoid")
        out._backward = lambda g: self._accumulate(g * out.data * (1.0 - out.data))
        return out

    def relu(self):
        out = Tensor(np.maximum(self.data, 0.0), _parents=(self,), _op="relu")
        out._backward = lambda g: self._accumulate(g * (self.data > 0.0))
        return out

    def gelu(self):
        """GELU, tanh approximation. Smooth everywhere (finite-difference friendly)."""
        c = np.sqrt(2.0 / np.pi)
        x = self.data
        inner = c * (x + 0.044715 * x**3)
        t = np.tanh(inner)
        out = Tensor(0.5 * x * (1.0 + t), _parents=(self,), _op="gelu")

        def bwd(g):
            dinner = c * (1.0 + 3 * 0.044715 * x**2)
            self._accumulate(g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner))

        out._backward = bwd
        return out

    # -- reductions / shape ops ------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,), _op="sum")

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), _parents=(self,), _op="reshape")
        out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        out = Tensor(self.data.transpose(axes), _parents=(self,), _op="transpose")
        out._backward = lambda g: self._accumulate(g.transpose(inv))
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key], _parents=(self,), _op="getitem")
        parts = key if isinstance(key, tuple) else (key,)
        fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

        def bwd(g):
            full = np.zeros_like(self.data)
            if fancy:
                np.add.at(full, key, g)  # scatter-add handles repeated indices
            else:
                full[key] += g
            self._accumulate(full)

        out._backward = bwd
        return out


# -- free-function ops ----------------------------------------------------


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors), _op="concat")
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    out._backward = bwd
    return out


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [Tensor._lift(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis), _parents=tuple(tensors), _op="stack")

    def bwd(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    out._backward = bwd
    return out


def embedding(table: Tensor, ids) -> Tensor:
    """Row gather: out[i] = table[ids[i]]. Backward scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ValueError(f"embedding id out of range [0, {table.data.shape[0]})")
    out = Tensor(table.data[ids], _parents=(table,), _op="embedding")

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        table._accumulate(full)

    out._backward = bwd
    return out


def masked_softmax(scores: Tensor, mask=None, axis: int = -1) -> Tensor:
    """Softmax over allowed keys only; masked entries get exactly zero weight.

    ``mask`` is a boolean numpy array broadcastable to ``scores`` (True = allowed).
    A row with no allowed entry raises MaskedRowError rather than yielding NaN.
    """
    x = scores.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=axis).all():
            raise MaskedRowError("softmax row with all keys masked")
        x = np.where(mask, x, -np.inf)
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)  # exp(-inf) == 0.0 exactly, so masked weights are exactly zero
    w = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(w, _parents=(scores,), _op="masked_softmax")

    def bwd(g):
        dot = (w * g).sum(axis=axis, keepdims=True)
        scores._accumulate(w * (g - dot))

    out._backward = bwd
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean/unit variance, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = (x.data - mu) / sigma
    out = Tensor(xhat * gamma.data + beta.data, _parents=(x, gamma, beta), _op="layer_norm")

    def bwd(g):
        if x.requires_grad:
            ghat = g * gamma.data
            m1 = ghat.mean(axis=-1, keepdims=True)
            m2 = (ghat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate((ghat - m1 - xhat * m2) / sigma)
        sum_axes = tuple(range(g.ndim - 1))
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=sum_axes))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=sum_axes))

    out._backward = bwd
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable log-softmax along ``axis``."""
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(shifted - lse, _parents=(x,), _op="log_softmax")
    soft = np.exp(out.data)
    out._backward = lambda g: x._accumulate(g - soft * g.sum(axis=axis, keepdims=True))
    return out


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Elementwise binary cross-entropy on logits (overflow-safe)."""
    t = np.asarray(targets, dtype=np.float64)
    z = logits.data
    loss = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(loss, _parents=(logits,), _op="bce_with_logits")
    sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    out._backward = lambda g: logits._accumulate(g * (sig - t))
    return out
