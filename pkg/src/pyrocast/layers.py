"""Trainable layers: Dense, LayerNorm, RMSNorm, BatchNorm1d, Dropout, Conv1D,
per-feature embeddings and a learned positional table.

Layers are plain parameter containers built on a tiny ``Module`` base that
handles parameter naming, train/eval mode and dtype casts.  Initialization
follows the shared recipe: Xavier-normal weights with gain 0.7, zero biases,
BatchNorm gamma=1 / beta=0.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError

XAVIER_GAIN = 0.7


def xavier_normal(rng: np.random.Generator, fan_in: int, fan_out: int,
                  shape: tuple, gain: float = XAVIER_GAIN) -> np.ndarray:
    std = gain * math.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=shape).astype(np.float32)


class Module:
    """Parameter container with named children and train/eval mode."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}
        self.training = True

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self.__dict__.setdefault("_children", {})[name] = value
        object.__setattr__(self, name, value)

    def register_parameter(self, name: str, value: np.ndarray,
                           trainable: bool = True) -> Tensor:
        t = Tensor(value, requires_grad=trainable)
        self._params[name] = t
        object.__setattr__(self, name, t)
        return t

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        object.__setattr__(self, name, module)
        return module

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, p in self._params.items():
            out[prefix + name] = p
        for name, child in self._children.items():
            out.update(child.named_parameters(prefix + name + "."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.named_parameters().items()
                if p.requires_grad}

    def frozen_parameters(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.named_parameters().items()
                if not p.requires_grad}

    def modules(self) -> list["Module"]:
        out = [self]
        for child in self._children.values():
            out.extend(child.modules())
        return out

    def train(self) -> "Module":
        for m in self.modules():
            m.training = True
        return self

    def eval(self) -> "Module":
        for m in self.modules():
            m.training = False
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def to_dtype(self, dtype) -> "Module":
        """Cast every parameter and buffer in place (for gradient checks)."""
        for m in self.modules():
            for name, p in m._params.items():
                p.data = p.data.astype(dtype)
                if p.grad is not None:
                    p.grad = p.grad.astype(dtype)
            for name in list(m._buffers):
                m._buffers[name] = m._buffers[name].astype(dtype)
                object.__setattr__(m, name, m._buffers[name])
        return self

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        for name, value in state.items():
            if name not in params:
                raise ContractError(f"unknown parameter {name!r}")
            if params[name].shape != value.shape:
                raise DimensionError(
                    f"parameter {name!r}: expected {params[name].shape}, got {value.shape}")
            params[name].data = value.astype(params[name].dtype).copy()

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters().items()}

    def buffers_state(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {prefix + n: b.copy() for n, b in self._buffers.items()}
        for name, child in self._children.items():
            out.update(child.buffers_state(prefix + name + "."))
        return out

    def load_buffers(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for name in self._buffers:
            key = prefix + name
            if key in state:
                self._buffers[name] = state[key].copy()
                object.__setattr__(self, name, self._buffers[name])
        for name, child in self._children.items():
            child.load_buffers(state, prefix + name + ".")


class Dense(Module):
    """Affine map x @ W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True, trainable: bool = True):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.register_parameter(
            "weight", xavier_normal(rng, in_dim, out_dim, (in_dim, out_dim)),
            trainable)
        if bias:
            self.register_parameter(
                "bias", np.zeros(out_dim, dtype=np.float32), trainable)
        else:
            self.bias = None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise DimensionError(
                f"dense expects input extent {self.in_dim}, got {x.shape[-1]}")
        y = ad.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    """Per-row normalization to mean 0 / population variance 1, then affine."""

    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.dim = dim
        self.eps = eps
        self.register_parameter("scale", np.ones(dim, dtype=np.float32))
        self.register_parameter("shift", np.zeros(dim, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        normed = centered * (var + self.eps) ** -0.5
        return normed * self.scale + self.shift


class RMSNorm(Module):
    """Root-mean-square normalization with a learned scale, no centering."""

    def __init__(self, dim: int, eps: float = 1e-6, trainable: bool = True):
        super().__init__()
        self.dim = dim
        self.eps = eps
        self.register_parameter("scale", np.ones(dim, dtype=np.float32),
                                trainable)

    def __call__(self, x: Tensor) -> Tensor:
        ms = (x * x).mean(axis=-1, keepdims=True)
        return x * (ms + self.eps) ** -0.5 * self.scale


class BatchNorm1d(Module):
    """Batch normalization over (B, F) or (B, C, L) inputs.

    Training mode normalizes with batch statistics and updates running
    estimates; inference uses the stored statistics only.
    """

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.register_parameter("gamma", np.ones(dim, dtype=np.float32))
        self.register_parameter("beta", np.zeros(dim, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(dim, dtype=np.float32))
        self.register_buffer("running_var", np.ones(dim, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim == 3:
            axes, view = (0, 2), (1, self.dim, 1)
        else:
            axes, view = (0,), (self.dim,)
        if self.training:
            mu = x.mean(axis=axes, keepdims=True)
            centered = x - mu
            var = (centered * centered).mean(axis=axes, keepdims=True)
            m = self.momentum
            self._buffers["running_mean"] = (
                (1 - m) * self._buffers["running_mean"]
                + m * mu.data.reshape(self.dim).astype(np.float32))
            self._buffers["running_var"] = (
                (1 - m) * self._buffers["running_var"]
                + m * var.data.reshape(self.dim).astype(np.float32))
            normed = centered * (var + self.eps) ** -0.5
        else:
            mu = self._buffers["running_mean"].reshape(view).astype(x.dtype)
            inv = ((self._buffers["running_var"].reshape(view)
                    + self.eps) ** -0.5).astype(x.dtype)
            normed = (x - Tensor(mu)) * Tensor(inv)
        gamma = self.gamma.reshape(view) if x.data.ndim == 3 else self.gamma
        beta = self.beta.reshape(view) if x.data.ndim == 3 else self.beta
        return normed * gamma + beta


class Dropout(Module):
    """Inverted dropout: identity at inference, kept values scaled by 1/(1-rate)."""

    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0:
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * Tensor(mask)


class Conv1D(Module):
    """1-D cross-correlation with zero padding that preserves length."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 padding: int, rng: np.random.Generator):
        super().__init__()
        if kernel % 2 == 0:
            raise ContractError(f"kernel extent must be odd, got {kernel}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.padding = padding
        fan_in = in_channels * kernel
        fan_out = out_channels * kernel
        self.register_parameter(
            "weight",
            xavier_normal(rng, fan_in, fan_out,
                          (out_channels, in_channels, kernel)))
        self.register_parameter(
            "bias", np.zeros(out_channels, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.in_channels:
            raise DimensionError(
                f"conv1d expects {self.in_channels} channels, got {x.shape[1]}")
        return ad.conv1d(x, self.weight, self.bias, self.padding)


class FeatureEmbedding(Module):
    """Per-feature 1 -> dim affine maps plus a learned positional table.

    Each of the `n_features` scalars gets its own projection vector, and
    the result is summed with a learned n_features x dim positional table,
    which doubles as the affine bias.  Output shape: (B, n_features, dim).

    The projection must vary across `dim`: a value broadcast as a constant
    row would be cancelled entirely by a following per-token LayerNorm.
    """

    def __init__(self, n_features: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.n_features = n_features
        self.dim = dim
        self.register_parameter(
            "a", xavier_normal(rng, 1, dim, (n_features, dim)))
        self.register_parameter(
            "pos", xavier_normal(rng, n_features, dim, (n_features, dim)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_features:
            raise DimensionError(
                f"embedding expects {self.n_features} features, got {x.shape[-1]}")
        B = x.shape[0]
        return x.reshape(B, self.n_features, 1) * self.a + self.pos
