"""Training protocol: weighted losses, dual AdamW groups with one-cycle
schedules, joint gradient clipping, gradient accumulation, early stopping
on validation F1, and best-weight checkpointing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import DatasetSplit
from .errors import ContractError, DimensionError, DivergenceError
from .metrics import ScoredSet, optimal_threshold
from .models import Model

PROB_EPS = 1e-7


@dataclass
class LossConfig:
    kind: str = "weighted_bce"       # or "balanced_focal"
    w0: float = 1.0
    w1: float = 2.0
    gamma: float = 2.0

    def validate(self) -> "LossConfig":
        if self.kind not in ("weighted_bce", "balanced_focal"):
            raise ContractError(f"unknown loss kind {self.kind!r}")
        if self.w0 <= 0 or self.w1 <= 0:
            raise ContractError("loss weights must be positive")
        if self.gamma < 0:
            raise ContractError("focal gamma must be >= 0")
        return self


@dataclass
class TrainConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    micro_batch: int = 32
    accumulation: int = 4            # effective batch = accumulation * micro_batch
    max_epochs: int = 300
    patience: int = 10
    min_delta: float = 0.001
    clip_norm: float = 1.0
    lr_projection: float = 1.0e-3
    lr_classifier: float = 5.0e-4
    wd_projection: float = 1.0e-2
    wd_classifier: float = 1.0e-3
    warmup_frac: float = 0.35
    floor_frac: float = 0.05
    seed: int = 42


def loss(p: Tensor, y: np.ndarray, cfg: LossConfig) -> Tensor:
    """Class-weighted BCE or balanced focal loss over probabilities."""
    y = np.asarray(y)
    if p.shape != y.shape:
        raise DimensionError(
            f"probabilities {p.shape} and labels {y.shape} differ in length")
    yf = y.astype(p.dtype)
    pc = ad.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    pos = Tensor(yf) * ad.log(pc)
    neg = Tensor(1.0 - yf) * ad.log(1.0 - pc)
    if cfg.kind == "balanced_focal":
        pos = pos * (1.0 - pc) ** cfg.gamma
        neg = neg * pc ** cfg.gamma
    total = cfg.w1 * pos + cfg.w0 * neg
    return -total.mean()


def onecycle_lr(step: int, total_steps: int, base_lr: float,
                warmup_frac: float = 0.35, floor_frac: float = 0.05) -> float:
    """Linear ramp floor -> base over the warmup fraction, then cosine decay
    back to the floor over the remaining steps."""
    if total_steps <= 0:
        raise ContractError("total_steps must be positive")
    if not 0 <= step < total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps})")
    floor = floor_frac * base_lr
    warm = warmup_frac * (total_steps - 1)
    if step <= warm:
        frac = step / warm if warm > 0 else 1.0
        return floor + (base_lr - floor) * frac
    progress = (step - warm) / ((total_steps - 1) - warm)
    return floor + (base_lr - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Zero-debias Adam with decoupled weight decay over one parameter group."""

    def __init__(self, params: dict[str, Tensor], base_lr: float,
                 weight_decay: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.base_lr = base_lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient in {name!r}")
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data


def clip_global_norm(params: list[Tensor], max_norm: float) -> float:
    """Scale all gradients jointly so their global L2 norm is <= max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class EarlyStopper:
    """Patience-based stopping on a score that must improve by min_delta."""

    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.best_score = -math.inf
        self.best_epoch = 0
        self.epochs_since_improve = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record an epoch score; returns True when training should stop."""
        if score > self.best_score + self.min_delta:
            self.best_score = score
            self.best_epoch = epoch
            self.epochs_since_improve = 0
        else:
            self.epochs_since_improve += 1
        return self.epochs_since_improve >= self.patience


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    best_f1: float = 0.0
    best_epoch: int = 0
    train_time_s: float = 0.0


@dataclass
class TrainResult:
    state: TrainState
    best_weights: dict[str, np.ndarray]
    history: list[dict]
    threshold: float


def predict(model: Model, features: np.ndarray,
            batch: int = 256) -> np.ndarray:
    """Eval-mode scores for a feature matrix."""
    model.eval()
    out = []
    for i in range(0, len(features), batch):
        x = Tensor(features[i:i + batch])
        out.append(model(x).data)
    return np.concatenate(out) if out else np.empty(0, dtype=np.float32)


def train(model: Model, train_split: DatasetSplit, val_split: DatasetSplit,
          cfg: TrainConfig) -> TrainResult:
    """Run the full protocol and return the best-F1 weights and history."""
    cfg.loss.validate()
    if len(train_split.labels) == 0 or len(val_split.labels) == 0:
        raise ContractError("train and validation splits must be non-empty")
    groups = model.param_groups()
    optims = {
        "projection": AdamW(groups["projection"], cfg.lr_projection,
                            cfg.wd_projection),
        "classifier": AdamW(groups["classifier"], cfg.lr_classifier,
                            cfg.wd_classifier),
    }
    all_trainable = [p for g in groups.values() for p in g.values()]
    effective = cfg.micro_batch * cfg.accumulation
    n = len(train_split.labels)
    steps_per_epoch = max(1, math.ceil(n / effective))
    total_steps = cfg.max_epochs * steps_per_epoch

    stopper = EarlyStopper(cfg.patience, cfg.min_delta)
    state = TrainState()
    history: list[dict] = []
    best_weights = model.state()
    best_buffers = model.buffers_state()
    best_threshold = 0.5
    rng = np.random.default_rng(cfg.seed)
    start = time.perf_counter()

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        model.reseed_dropout(cfg.seed + epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for s in range(steps_per_epoch):
            chunk = order[s * effective:(s + 1) * effective]
            if len(chunk) == 0:
                continue
            model.zero_grad()
            micros = [chunk[i:i + cfg.micro_batch]
                      for i in range(0, len(chunk), cfg.micro_batch)]
            for mb in micros:
                x = Tensor(train_split.features[mb])
                p = model(x)
                l = loss(p, train_split.labels[mb], cfg.loss) * (1.0 / len(micros))
                lv = l.item()
                if not math.isfinite(lv):
                    raise DivergenceError(
                        f"NaN loss at optimizer step {state.step}")
                epoch_loss += lv
                l.backward()
            batches += 1
            clip_global_norm(all_trainable, cfg.clip_norm)
            for name, opt in optims.items():
                lr = onecycle_lr(min(state.step, total_steps - 1), total_steps,
                                 opt.base_lr, cfg.warmup_frac, cfg.floor_frac)
                opt.step(lr)
            state.step += 1
        state.epoch = epoch

        scores = predict(model, val_split.features)
        threshold, f1 = optimal_threshold(
            ScoredSet(scores, val_split.labels))
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / max(batches, 1),
            "val_f1": f1,
            "threshold": threshold,
            "lr_projection": onecycle_lr(
                min(state.step - 1, total_steps - 1), total_steps,
                cfg.lr_projection, cfg.warmup_frac, cfg.floor_frac),
            "lr_classifier": onecycle_lr(
                min(state.step - 1, total_steps - 1), total_steps,
                cfg.lr_classifier, cfg.warmup_frac, cfg.floor_frac),
        })
        stop = stopper.update(epoch, f1)
        if stopper.best_epoch == epoch:
            state.best_f1 = stopper.best_score
            state.best_epoch = epoch
            best_weights = model.state()
            best_buffers = model.buffers_state()
            best_threshold = threshold
        if stop:
            break

    state.train_time_s = time.perf_counter() - start
    model.load_state(best_weights)
    model.load_buffers(best_buffers)
    return TrainResult(state, best_weights, history, best_threshold)
