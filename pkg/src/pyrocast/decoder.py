"""Frozen decoder slice: grouped-query attention + gated feed-forward blocks.

The slice is a stack of pre/post-RMSNorm decoder blocks whose parameters are
excluded from gradient computation and from every optimizer group.  Weights
are either random-seeded or imported from a NamedTensorArchive; both paths
produce bit-identical round trips through export/load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .archive import NamedTensorArchive
from .errors import ConfigError, DimensionError
from .layers import Dense, Module, RMSNorm, xavier_normal


@dataclass
class DecoderBlockConfig:
    hidden: int = 1152
    n_heads: int = 8
    n_kv: int = 2
    head_dim: int = 144
    ffn_inner: int = 1152
    rmsnorm_eps: float = 1e-6
    block_count: int = 2
    seed: int = 42

    def validate(self) -> "DecoderBlockConfig":
        if self.n_heads * self.head_dim != self.hidden:
            raise ConfigError(
                f"n_heads*head_dim must equal hidden: "
                f"{self.n_heads}*{self.head_dim} != {self.hidden}")
        if self.n_heads % self.n_kv != 0:
            raise ConfigError(
                f"n_heads ({self.n_heads}) must be divisible by n_kv ({self.n_kv})")
        if self.block_count < 1:
            raise ConfigError("block_count must be >= 1")
        return self


def count_slice_parameters(config: DecoderBlockConfig) -> int:
    """Exact scalar count of the frozen slice for a given configuration."""
    H, kv_dim = config.hidden, config.n_kv * config.head_dim
    per_block = (
        H * H                       # query projection
        + H * kv_dim                # key projection
        + H * kv_dim                # value projection
        + H * H                     # output projection
        + 3 * H * config.ffn_inner  # gate / up / down
        + 4 * H                     # pre/post norms for both sublayers
    )
    return config.block_count * per_block


class GroupedQueryAttention(Module):
    """Attention where n_heads/n_kv query heads share each key/value head."""

    def __init__(self, config: DecoderBlockConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        H, kv_dim = config.hidden, config.n_kv * config.head_dim
        self.q_proj = Dense(H, H, rng, bias=False, trainable=False)
        self.k_proj = Dense(H, kv_dim, rng, bias=False, trainable=False)
        self.v_proj = Dense(H, kv_dim, rng, bias=False, trainable=False)
        self.o_proj = Dense(H, H, rng, bias=False, trainable=False)

    def __call__(self, x: Tensor) -> Tensor:
        cfg = self.config
        B, S, H = x.shape
        group = cfg.n_heads // cfg.n_kv
        q = self.q_proj(x).reshape(B, S, cfg.n_heads, cfg.head_dim)
        k = self.k_proj(x).reshape(B, S, cfg.n_kv, cfg.head_dim)
        v = self.v_proj(x).reshape(B, S, cfg.n_kv, cfg.head_dim)
        # (B, heads, S, hd); kv heads repeated across their query group
        q = q.swapaxes(1, 2)
        k = k.swapaxes(1, 2)
        v = v.swapaxes(1, 2)
        if group > 1:
            # query head h attends through kv head h // group
            idx = np.repeat(np.arange(cfg.n_kv), group)
            k = k[:, idx]
            v = v[:, idx]
        scores = ad.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(cfg.head_dim))
        if S > 1:
            mask = np.triu(np.full((S, S), -1e30, dtype=x.dtype.type), k=1)
            scores = scores + Tensor(mask)
        attn = ad.softmax(scores)
        ctx = ad.matmul(attn, v)                       # (B, heads, S, hd)
        ctx = ctx.swapaxes(1, 2).reshape(B, S, H)
        return self.o_proj(ctx)


class GatedFeedForward(Module):
    """down(gelu(gate(x)) * up(x)) with no bias terms."""

    def __init__(self, config: DecoderBlockConfig, rng: np.random.Generator):
        super().__init__()
        H, inner = config.hidden, config.ffn_inner
        self.gate = Dense(H, inner, rng, bias=False, trainable=False)
        self.up = Dense(H, inner, rng, bias=False, trainable=False)
        self.down = Dense(inner, H, rng, bias=False, trainable=False)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(ad.gelu(self.gate(x)) * self.up(x))


class DecoderBlock(Module):
    """Residual GQA + gated-FFN block with RMSNorm before and after each sublayer."""

    def __init__(self, config: DecoderBlockConfig, rng: np.random.Generator):
        super().__init__()
        eps = config.rmsnorm_eps
        self.attn = GroupedQueryAttention(config, rng)
        self.ffn = GatedFeedForward(config, rng)
        self.pre_attn_norm = RMSNorm(config.hidden, eps, trainable=False)
        self.post_attn_norm = RMSNorm(config.hidden, eps, trainable=False)
        self.pre_ffn_norm = RMSNorm(config.hidden, eps, trainable=False)
        self.post_ffn_norm = RMSNorm(config.hidden, eps, trainable=False)
        self.hidden = config.hidden

    def __call__(self, h: Tensor) -> Tensor:
        if h.shape[-1] != self.hidden:
            raise DimensionError(
                f"decoder block expects hidden extent {self.hidden}, "
                f"got {h.shape[-1]}")
        h = h + self.post_attn_norm(self.attn(self.pre_attn_norm(h)))
        h = h + self.post_ffn_norm(self.ffn(self.pre_ffn_norm(h)))
        return h


class FrozenSlice(Module):
    """Stack of frozen decoder blocks."""

    def __init__(self, config: DecoderBlockConfig,
                 provenance: str = "random-seeded"):
        super().__init__()
        self.config = config.validate()
        self.provenance = provenance
        rng = np.random.default_rng(config.seed)
        for i in range(config.block_count):
            self.add_module(f"block{i}", DecoderBlock(config, rng))

    def __call__(self, h: Tensor) -> Tensor:
        for i in range(self.config.block_count):
            h = self._children[f"block{i}"](h)
        return h

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())


def export_slice(slice_: FrozenSlice) -> NamedTensorArchive:
    """Serialize every slice parameter into an archive."""
    arch = NamedTensorArchive()
    for name, p in slice_.named_parameters().items():
        arch.add(name, p.data)
    return arch


def load_slice(archive: NamedTensorArchive,
               config: DecoderBlockConfig) -> FrozenSlice:
    """Build a slice from archived weights; names and shapes must match exactly."""
    slice_ = FrozenSlice(config, provenance="imported")
    expected = {n: p.shape for n, p in slice_.named_parameters().items()}
    archive.require(expected)
    slice_.load_state({n: archive[n] for n in expected})
    return slice_
