"""The five candidate architectures behind one forward/audit interface.

Variants:
  internal_world - four-branch input adapter, 3-layer FFN, projection head,
                   frozen decoder slice, MLP classifier
  ffn3l          - plain feed-forward baseline
  cnn1d          - two-stage 1-D convolutional baseline
  pe_mlp         - per-feature embeddings + learned positional table
  phys_entropy   - trunk + differentiable entropy readout + residual classifier

All dense/conv weights use Xavier-normal init with gain 0.7, biases zero,
BatchNorm gamma=1/beta=0.  Forward returns a probability per row, strictly
inside (0, 1) for finite inputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .archive import NamedTensorArchive
from .decoder import DecoderBlockConfig, FrozenSlice
from .errors import ConfigError, DimensionError
from .layers import (BatchNorm1d, Conv1D, Dense, Dropout, FeatureEmbedding,
                     LayerNorm, Module)

VARIANTS = ("internal_world", "ffn3l", "cnn1d", "pe_mlp", "phys_entropy")

AUDIT_NOTE = ("counts are exact scalar tallies from the constructed modules; "
              "rounded figures quoted elsewhere may disagree with these exact sums")


@dataclass
class ModelConfig:
    variant: str = "internal_world"
    input_dim: int = 276
    branches: int = 4
    branch_hidden: int = 144
    branch_out: int = 288
    hidden: int = 1152
    ffn_dropout: float = 0.4
    classifier_dropout: float = 0.3
    classifier_widths: tuple[int, ...] = (256, 64, 1)
    ffn_dropout_all_layers: bool = True
    pseudo_seq_len: int = 1
    seed: int = 42
    slice: DecoderBlockConfig = field(default_factory=DecoderBlockConfig)

    def validate(self) -> "ModelConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; "
                              f"expected one of {VARIANTS}")
        if self.branches * self.branch_out != self.hidden:
            raise ConfigError(
                f"branches*branch_out must equal hidden: "
                f"{self.branches}*{self.branch_out} != {self.hidden}")
        if self.input_dim % self.branches != 0:
            raise ConfigError(
                f"input_dim ({self.input_dim}) must divide evenly into "
                f"{self.branches} branches")
        if self.hidden != self.slice.hidden:
            raise ConfigError(
                f"model hidden ({self.hidden}) must match slice hidden "
                f"({self.slice.hidden})")
        self.slice.validate()
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["classifier_widths"] = list(self.classifier_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "slice" in d and isinstance(d["slice"], dict):
            d["slice"] = DecoderBlockConfig(**d["slice"])
        if "classifier_widths" in d:
            d["classifier_widths"] = tuple(d["classifier_widths"])
        return cls(**d)


class Model(Module):
    """Base class: probability-emitting binary classifier."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.rng = np.random.default_rng(config.seed)

    def __call__(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def reseed_dropout(self, seed: int) -> None:
        """Reset the RNG that drives dropout masks (for reproducible epochs)."""
        self.rng = np.random.default_rng(seed)
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = self.rng

    def param_groups(self) -> dict[str, dict[str, Tensor]]:
        """Split trainable parameters into projection/classifier optimizer groups."""
        cls_names = {n for n in self.trainable_parameters()
                     if n.startswith("classifier")}
        trainable = self.trainable_parameters()
        return {
            "projection": {n: p for n, p in trainable.items()
                           if n not in cls_names},
            "classifier": {n: p for n, p in trainable.items()
                           if n in cls_names},
        }

    def _check_input(self, x: Tensor) -> None:
        if x.data.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise DimensionError(
                f"expected input of shape (B, {self.config.input_dim}), "
                f"got {x.shape}")


class _Branch(Module):
    def __init__(self, in_dim, hidden, out, rng):
        super().__init__()
        self.d1 = Dense(in_dim, hidden, rng)
        self.ln1 = LayerNorm(hidden)
        self.d2 = Dense(hidden, out, rng)
        self.ln2 = LayerNorm(out)

    def __call__(self, x):
        h = self.ln1(ad.relu(self.d1(x)))
        return self.ln2(ad.relu(self.d2(h)))


class _Classifier(Module):
    def __init__(self, widths, dropout, rng):
        super().__init__()
        self.widths = widths
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            self.add_module(f"d{i}", Dense(a, b, rng))
            if i < len(widths) - 2:
                self.add_module(f"ln{i}", LayerNorm(b))
                self.add_module(f"drop{i}", Dropout(dropout, rng))

    def __call__(self, x):
        n = len(self.widths) - 1
        for i in range(n):
            x = self._children[f"d{i}"](x)
            if i < n - 1:
                x = self._children[f"drop{i}"](
                    self._children[f"ln{i}"](ad.relu(x)))
        return x


class InternalWorldModel(Model):
    """Trainable shell around a frozen decoder slice."""

    def __init__(self, config: ModelConfig, slice_: FrozenSlice | None = None):
        super().__init__(config)
        cfg = config
        per_branch = cfg.input_dim // cfg.branches
        self.branches = Module()
        for i in range(cfg.branches):
            self.branches.add_module(
                f"b{i}", _Branch(per_branch, cfg.branch_hidden,
                                 cfg.branch_out, self.rng))
        self.ffn = Module()
        for i in range(3):
            self.ffn.add_module(f"d{i}", Dense(cfg.hidden, cfg.hidden, self.rng))
            self.ffn.add_module(f"ln{i}", LayerNorm(cfg.hidden))
            if cfg.ffn_dropout_all_layers or i == 2:
                self.ffn.add_module(
                    f"drop{i}", Dropout(cfg.ffn_dropout, self.rng))
        self.projection = Module()
        self.projection.add_module("dense",
                                   Dense(cfg.hidden, cfg.hidden, self.rng))
        self.projection.add_module("ln", LayerNorm(cfg.hidden))
        self.internal_world = slice_ if slice_ is not None else FrozenSlice(cfg.slice)
        self.classifier = _Classifier(
            (cfg.hidden,) + tuple(cfg.classifier_widths),
            cfg.classifier_dropout, self.rng)

    def __call__(self, x: Tensor) -> Tensor:
        self._check_input(x)
        cfg = self.config
        per_branch = cfg.input_dim // cfg.branches
        chunks = ad.split(x, [per_branch] * cfg.branches, axis=1)
        h = ad.concat([self.branches._children[f"b{i}"](c)
                       for i, c in enumerate(chunks)], axis=1)
        for i in range(3):
            h = ad.gelu(self.ffn._children[f"d{i}"](h))
            h = self.ffn._children[f"ln{i}"](h)
            drop = self.ffn._children.get(f"drop{i}")
            if drop is not None:
                h = drop(h)
        h = self.projection.ln(ad.gelu(self.projection.dense(h)))
        B = h.shape[0]
        seq = h.reshape(B, 1, cfg.hidden)
        if cfg.pseudo_seq_len > 1:
            seq = ad.concat([seq] * cfg.pseudo_seq_len, axis=1)
        seq = self.internal_world(seq)
        h = seq[:, -1, :].reshape(B, cfg.hidden)
        logit = self.classifier(h)
        return ad.sigmoid(logit).reshape(B)


class Ffn3lModel(Model):
    def __init__(self, config: ModelConfig):
        super().__init__(config)
        d = config.input_dim
        rng = self.rng
        self.d1 = Dense(d, 256, rng)
        self.bn1 = BatchNorm1d(256)
        self.drop1 = Dropout(config.classifier_dropout, rng)
        self.d2 = Dense(256, 128, rng)
        self.bn2 = BatchNorm1d(128)
        self.drop2 = Dropout(config.classifier_dropout, rng)
        self.d3 = Dense(128, 64, rng)
        self.bn3 = BatchNorm1d(64)
        self.classifier = Module()
        self.classifier.add_module("out", Dense(64, 1, rng))

    def __call__(self, x: Tensor) -> Tensor:
        self._check_input(x)
        h = self.drop1(self.bn1(ad.relu(self.d1(x))))
        h = self.drop2(self.bn2(ad.relu(self.d2(h))))
        h = self.bn3(ad.relu(self.d3(h)))
        return ad.sigmoid(self.classifier.out(h)).reshape(x.shape[0])


class Cnn1dModel(Model):
    def __init__(self, config: ModelConfig):
        super().__init__(config)
        rng = self.rng
        self.conv1 = Conv1D(1, 32, 3, 1, rng)
        self.bn1 = BatchNorm1d(32)
        self.conv2 = Conv1D(32, 64, 3, 1, rng)
        self.bn2 = BatchNorm1d(64)
        self.flat_dim = 64 * config.input_dim
        self.d1 = Dense(self.flat_dim, 128, rng)
        self.bn3 = BatchNorm1d(128)
        self.drop = Dropout(0.30, rng)
        self.classifier = Module()
        self.classifier.add_module("out", Dense(128, 1, rng))

    def __call__(self, x: Tensor) -> Tensor:
        self._check_input(x)
        B = x.shape[0]
        h = x.reshape(B, 1, self.config.input_dim)
        h = self.bn1(ad.relu(self.conv1(h)))
        h = self.bn2(ad.relu(self.conv2(h)))
        h = h.reshape(B, self.flat_dim)
        h = self.drop(self.bn3(ad.relu(self.d1(h))))
        return ad.sigmoid(self.classifier.out(h)).reshape(B)


class PeMlpModel(Model):
    def __init__(self, config: ModelConfig, embed_dim: int = 32):
        super().__init__(config)
        rng = self.rng
        self.embed_dim = embed_dim
        self.embed = FeatureEmbedding(config.input_dim, embed_dim, rng)
        self.ln = LayerNorm(embed_dim)
        self.drop = Dropout(0.10, rng)
        self.flat_dim = config.input_dim * embed_dim
        self.classifier = Module()
        self.classifier.add_module("out", Dense(self.flat_dim, 1, rng))

    def __call__(self, x: Tensor) -> Tensor:
        self._check_input(x)
        B = x.shape[0]
        h = self.drop(self.ln(self.embed(x)))
        h = h.reshape(B, self.flat_dim)
        return ad.sigmoid(self.classifier.out(h)).reshape(B)


class EntropyLayer(Module):
    """Differentiable Boltzmann-Gibbs entropy over a softmax of the input.

    S = -k * sum_j alpha_j p_j ln p_j with p = softmax(h) per row.
    k is a trainable scalar drawn from U(0.8, 1.2); alpha starts at ones.
    """

    def __init__(self, n: int, rng: np.random.Generator):
        super().__init__()
        if n < 2:
            raise DimensionError(f"entropy layer needs >= 2 inputs, got {n}")
        self.n = n
        self.register_parameter(
            "k", np.array(rng.uniform(0.8, 1.2), dtype=np.float32))
        self.register_parameter("alpha", np.ones(n, dtype=np.float32))

    def __call__(self, h: Tensor) -> Tensor:
        p = ad.softmax(h)
        safe = ad.clip(p, 1e-30, 1.0)
        plogp = p * ad.log(safe)
        s = -(self.alpha * plogp).sum(axis=-1, keepdims=True) * self.k
        return s


class PhysEntropyModel(Model):
    """Trunk + entropy readout + parallel FFN branch + residual classifier."""

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        d = config.input_dim
        rng = self.rng
        self.trunk1 = Dense(d, 512, rng)
        self.bn1 = BatchNorm1d(512)
        self.drop1 = Dropout(0.30, rng)
        self.trunk2 = Dense(512, 256, rng)
        self.bn2 = BatchNorm1d(256)
        self.drop2 = Dropout(0.30, rng)
        self.entropy = EntropyLayer(256, rng)
        self.ffn1 = Dense(d, 256, rng)
        self.ffn2 = Dense(256, 128, rng)
        self.res_in = Dense(129, 128, rng)
        self.res1 = Dense(128, 128, rng)
        self.res2 = Dense(128, 128, rng)
        self.classifier = Module()
        self.classifier.add_module("out", Dense(384, 1, rng))

    def __call__(self, x: Tensor) -> Tensor:
        self._check_input(x)
        B = x.shape[0]
        t = self.drop1(self.bn1(ad.relu(self.trunk1(x))))
        t = self.drop2(self.bn2(ad.relu(self.trunk2(t))))
        s = self.entropy(t)                       # (B, 1)
        f = ad.relu(self.ffn2(ad.relu(self.ffn1(x))))
        r = ad.relu(self.res_in(ad.concat([s, f], axis=1)))
        r = ad.relu(r + self.res1(r))
        r = ad.relu(r + self.res2(r))
        h = ad.concat([t, r], axis=1)             # 256 + 128 = 384
        return ad.sigmoid(self.classifier.out(h)).reshape(B)


_MODEL_CLASSES = {
    "internal_world": InternalWorldModel,
    "ffn3l": Ffn3lModel,
    "cnn1d": Cnn1dModel,
    "pe_mlp": PeMlpModel,
    "phys_entropy": PhysEntropyModel,
}


def build_model(config: ModelConfig) -> Model:
    config.validate()
    return _MODEL_CLASSES[config.variant](config)


def audit_parameters(model: Model) -> dict:
    """Exact per-block scalar counts, trainable and frozen tallied separately.

    ``dense`` counts only Dense/Conv weights and biases inside the block,
    matching the figures one would derive from the layer extents alone.
    """
    per_block = []
    for name, child in model._children.items():
        params = child.named_parameters()
        trainable = sum(p.size for p in params.values() if p.requires_grad)
        frozen = sum(p.size for p in params.values() if not p.requires_grad)
        dense = sum(
            p.size for m in child.modules() if isinstance(m, (Dense, Conv1D))
            for p in m._params.values())
        per_block.append({"name": name, "trainable": trainable,
                          "frozen": frozen, "dense": dense})
    own = {n: p for n, p in model._params.items()}
    if own:
        per_block.append({
            "name": "(root)",
            "trainable": sum(p.size for p in own.values() if p.requires_grad),
            "frozen": sum(p.size for p in own.values() if not p.requires_grad),
            "dense": 0,
        })
    return {
        "trainable": sum(b["trainable"] for b in per_block),
        "frozen": sum(b["frozen"] for b in per_block),
        "per_block": per_block,
        "note": AUDIT_NOTE,
    }


# -- checkpoint helpers -----------------------------------------------------

def model_to_archive(model: Model) -> NamedTensorArchive:
    arch = NamedTensorArchive()
    for name, p in model.named_parameters().items():
        arch.add(name, p.data)
    for mod_name, m, buf_name, buf in _named_buffers(model):
        arch.add(f"{mod_name}{buf_name}", buf)
    return arch


def _named_buffers(module: Module, prefix: str = ""):
    for name, buf in module._buffers.items():
        yield prefix, module, name, buf
    for child_name, child in module._children.items():
        yield from _named_buffers(child, f"{prefix}{child_name}.")


def save_checkpoint(model: Model, path: str | Path) -> None:
    """Write weights (archive) plus a JSON config sidecar."""
    path = Path(path)
    model_to_archive(model).save(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(model.config.to_dict(), indent=2))


def load_checkpoint(path: str | Path) -> Model:
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    config = ModelConfig.from_dict(json.loads(sidecar.read_text()))
    model = build_model(config)
    arch = NamedTensorArchive.load(path)
    params = model.named_parameters()
    buffers = {f"{p}{n}": (m, n) for p, m, n, _ in _named_buffers(model)}
    state = {}
    for name in arch.names():
        if name in params:
            state[name] = arch[name]
        elif name in buffers:
            mod, buf_name = buffers[name]
            mod._buffers[buf_name] = arch[name].astype(np.float32).copy()
            object.__setattr__(mod, buf_name, mod._buffers[buf_name])
        else:
            raise ConfigError(f"checkpoint tensor {name!r} not in model")
    model.load_state(state)
    return model
