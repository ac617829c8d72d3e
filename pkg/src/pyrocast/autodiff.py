"""Dense-tensor reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array plus an optional gradient accumulator and
records enough of the computation graph to run backpropagation.  Gradients
accumulate additively; zeroing them between steps is the caller's duty.

Values are float32 by default; float64 is available for gradient checking.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, DomainError

_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """N-dimensional value with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 _parents: tuple = (), _backward: Callable | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self._parents = _parents
        self._backward = _backward

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def astype(self, dtype) -> "Tensor":
        t = Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)
        return t

    # -- graph construction helpers ---------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"],
              backward: Callable) -> "Tensor":
        needs = any(p.requires_grad or p._parents for p in parents)
        if not needs:
            return Tensor(data)
        out = Tensor(data, requires_grad=True, _parents=tuple(parents),
                     _backward=backward)
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if not (self.requires_grad or self._parents):
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad.astype(self.data.dtype, copy=False)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        data = self.data + other.data
        def backward(g):
            self._accumulate(_unbroadcast(g, self.shape))
            other._accumulate(_unbroadcast(g, other.shape))
        return Tensor._make(data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def backward(g):
            self._accumulate(-g)
        return Tensor._make(-self.data, (self,), backward)

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        return self + (-other)

    def __rsub__(self, other) -> "Tensor":
        return Tensor(np.asarray(other, dtype=self.dtype)) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        data = self.data * other.data
        def backward(g):
            self._accumulate(_unbroadcast(g * other.data, self.shape))
            other._accumulate(_unbroadcast(g * self.data, other.shape))
        return Tensor._make(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        return self * other ** -1.0

    def __rtruediv__(self, other) -> "Tensor":
        return Tensor(np.asarray(other, dtype=self.dtype)) * self ** -1.0

    def __pow__(self, exponent: float) -> "Tensor":
        data = self.data ** exponent
        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1.0))
        return Tensor._make(data, (self,), backward)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, key) -> "Tensor":
        data = self.data[key]
        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            self._accumulate(full)
        return Tensor._make(data, (self,), backward)

    # -- reductions and shaping -------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)
        def backward(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape).astype(self.dtype))
        return Tensor._make(data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        elif isinstance(axis, tuple):
            n = int(np.prod([self.shape[a] for a in axis]))
        else:
            n = self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        data = self.data.reshape(shape)
        def backward(g):
            self._accumulate(g.reshape(self.shape))
        return Tensor._make(data, (self,), backward)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        data = self.data.swapaxes(a, b)
        def backward(g):
            self._accumulate(g.swapaxes(a, b))
        return Tensor._make(data, (self,), backward)

    # -- backward pass -----------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar; leaf grads accumulate additively."""
        if self.size != 1:
            raise ContractError(
                f"backward() requires a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


# -- free-function primitives ---------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports stacked leading batch dimensions."""
    if a.shape[-1] != b.shape[-2 if b.data.ndim > 1 else 0]:
        raise DimensionError(
            f"matmul inner extents differ: {a.shape} x {b.shape}")
    data = np.matmul(a.data, b.data)
    def backward(g):
        if a.requires_grad or a._parents:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad or b._parents:
            if b.data.ndim == 2 and g.ndim > 2:
                # collapse batch dims so dW is one GEMM, not stacked outers
                k, n = a.shape[-1], g.shape[-1]
                gb = np.matmul(a.data.reshape(-1, k).T, g.reshape(-1, n))
            else:
                gb = _unbroadcast(
                    np.matmul(a.data.swapaxes(-1, -2), g), b.shape)
            b._accumulate(gb)
    return Tensor._make(data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)
    def backward(g):
        x._accumulate(g * (x.data > 0))
    return Tensor._make(data, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """GELU via the tanh approximation 0.5x(1+tanh(c(x+0.044715x^3)))."""
    u = _GELU_C * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(u)
    data = 0.5 * x.data * (1.0 + t)
    def backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x.data ** 2)
        dgelu = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * du
        x._accumulate(g * dgelu)
    return Tensor._make(data, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    data = np.empty_like(x.data)
    pos = x.data >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    data[~pos] = ex / (1.0 + ex)
    def backward(g):
        x._accumulate(g * data * (1.0 - data))
    return Tensor._make(data, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    data = np.tanh(x.data)
    def backward(g):
        x._accumulate(g * (1.0 - data ** 2))
    return Tensor._make(data, (x,), backward)


def exp(x: Tensor) -> Tensor:
    data = np.exp(x.data)
    def backward(g):
        x._accumulate(g * data)
    return Tensor._make(data, (x,), backward)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise DomainError("log requires strictly positive inputs")
    data = np.log(x.data)
    def backward(g):
        x._accumulate(g / x.data)
    return Tensor._make(data, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Numerically stable softmax over the last dimension."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)
    def backward(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        x._accumulate(data * (g - inner))
    return Tensor._make(data, (x,), backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is passed through only inside [lo, hi]."""
    data = np.clip(x.data, lo, hi)
    def backward(g):
        x._accumulate(g * ((x.data >= lo) & (x.data <= hi)))
    return Tensor._make(data, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])
    return Tensor._make(data, tuple(tensors), backward)


def split(x: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    """Split into consecutive chunks of the given extents along `axis`."""
    if sum(sizes) != x.shape[axis]:
        raise DimensionError(
            f"split sizes {list(sizes)} do not cover extent {x.shape[axis]}")
    out = []
    offset = 0
    for n in sizes:
        idx = [slice(None)] * x.data.ndim
        idx[axis] = slice(offset, offset + n)
        out.append(x[tuple(idx)])
        offset += n
    return out


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None, padding: int) -> Tensor:
    """Cross-correlation of (B, C_in, L) with (C_out, C_in, k); zero padding."""
    B, c_in, L = x.shape
    c_out, c_in_w, k = weight.shape
    if c_in != c_in_w:
        raise DimensionError(
            f"conv1d channel mismatch: input {c_in} vs kernel {c_in_w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)
    data = np.einsum("bilk,oik->bol", windows, weight.data)
    if bias is not None:
        data = data + bias.data[:, None]
    parents = (x, weight) if bias is None else (x, weight, bias)
    def backward(g):
        weight._accumulate(np.einsum("bilk,bol->oik", windows, g))
        if bias is not None:
            bias._accumulate(g.sum(axis=(0, 2)))
        gxp = np.zeros_like(xp)
        Lout = g.shape[2]
        for t in range(k):
            gxp[:, :, t:t + Lout] += np.einsum("bol,oi->bil", g, weight.data[:, :, t])
        x._accumulate(gxp[:, :, padding:padding + L])
    return Tensor._make(data, parents, backward)


# -- gradient checking ------------------------------------------------------

def finite_difference_grad(f: Callable[[np.ndarray], float],
                           x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, in float64."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def check_gradient(f: Callable[[Tensor], Tensor], x: np.ndarray,
                   h: float = 1e-5) -> float:
    """Max relative error between analytic and finite-difference gradients."""
    x64 = x.astype(np.float64)
    t = Tensor(x64.copy(), requires_grad=True, dtype=np.float64)
    f(t).backward()
    analytic = t.grad.copy()
    numeric = finite_difference_grad(
        lambda a: float(f(Tensor(a.copy(), dtype=np.float64)).item()), x64, h)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def parameters_vector(tensors: Iterable[Tensor]) -> np.ndarray:
    """Flatten a parameter list into one vector (copy)."""
    return np.concatenate([t.data.reshape(-1) for t in tensors])
