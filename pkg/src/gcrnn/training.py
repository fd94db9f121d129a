"""Weak-label training: class-balanced batches, clip-level BCE, Adam/SGD."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import ModelCheckpoint
from .features import FeatureStats
from .model import Network

log = logging.getLogger(__name__)

BCE_EPS = 1e-7


@dataclass
class WeakLabelSet:
    clip_id: str
    tags: np.ndarray  # multi-hot, one entry per class

    def __post_init__(self):
        self.tags = np.asarray(self.tags, dtype=np.int8)
        if self.tags.ndim != 1 or not np.all((self.tags == 0) | (self.tags == 1)):
            raise ValueError(f"{self.clip_id}: tags must be a 0/1 vector")


@dataclass
class BatchPlan:
    indices: np.ndarray
    seed: int
    batch_size: int


def label_matrix(labels) -> np.ndarray:
    if len(labels) and isinstance(labels[0], WeakLabelSet):
        return np.stack([l.tags for l in labels]).astype(np.int8)
    return np.asarray(labels, dtype=np.int8)


class BalancedBatchSampler:
    """Batches that contain every present class and otherwise follow class ratios.

    Each batch reserves one slot per class that has at least one clip. The
    other ``batch_size - K`` slots draw a class with probability proportional
    to ``max(batch_size * ratio_c - 1, 0)``, where ``ratio_c`` is the class's
    share of all tag occurrences. A class slot is filled with a clip drawn
    uniformly from the clips carrying that class. The expected share of slots
    per class is then ratio_c for common classes (up to the small mass moved
    to rare ones) and 1/batch_size for classes rarer than that.

    Clips without any tag are never drawn.
    """

    def __init__(self, labels, batch_size: int, seed: int = 0):
        Y = label_matrix(labels)
        if Y.ndim != 2 or Y.shape[0] == 0:
            raise ValueError("need a non-empty [clips, classes] label matrix")
        counts = Y.sum(axis=0).astype(np.float64)
        self.present = np.flatnonzero(counts > 0)
        if batch_size < len(self.present):
            raise ValueError(
                f"batch_size {batch_size} is smaller than the {len(self.present)} classes present; "
                f"use batch_size >= {len(self.present)} so every class fits in every batch"
            )
        self.batch_size = batch_size
        self.seed = seed
        self.n_classes = Y.shape[1]
        self.members = [np.flatnonzero(Y[:, c]) for c in range(self.n_classes)]
        self.ratio = counts / counts.sum()
        excess = np.maximum(batch_size * self.ratio - 1.0, 0.0)
        self.fill_prob = excess / excess.sum() if excess.sum() > 0 else np.full(self.n_classes, 1.0 / self.n_classes)
        self._rng = np.random.default_rng(seed)

    def expected_class_frequency(self) -> np.ndarray:
        """Expected fraction of batch slots assigned to each class."""
        B, K = self.batch_size, len(self.present)
        freq = (B - K) * self.fill_prob
        freq[self.present] += 1.0
        return freq / B

    def next_batch(self) -> np.ndarray:
        rng = self._rng
        extra = rng.choice(self.n_classes, size=self.batch_size - len(self.present), p=self.fill_prob)
        slots = np.concatenate([self.present, extra])
        picks = np.array([m[rng.integers(len(m))] for m in (self.members[c] for c in slots)])
        return picks[rng.permutation(len(picks))]

    def __iter__(self) -> Iterator[np.ndarray]:
        while True:
            yield self.next_batch()


def balanced_batches(labels, batch_size: int, seed: int = 0, n_batches: int | None = None) -> list[BatchPlan]:
    """``n_batches`` balanced batches; one epoch (ceil(N / batch_size)) by default."""
    sampler = BalancedBatchSampler(labels, batch_size, seed)
    n = n_batches if n_batches is not None else math.ceil(len(label_matrix(labels)) / batch_size)
    return [BatchPlan(sampler.next_batch(), seed, batch_size) for _ in range(n)]


def random_batches(n_clips: int, batch_size: int, seed: int = 0) -> Iterator[np.ndarray]:
    rng = np.random.default_rng(seed)
    while True:
        yield rng.integers(n_clips, size=batch_size)


def bce_loss(pred, target) -> T.Tensor:
    """Mean binary cross-entropy over batch and classes, predictions clamped to [eps, 1-eps]."""
    pred = T.as_tensor(pred)
    y = np.asarray(target, dtype=np.float64)
    if pred.shape != y.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target shape {y.shape}")
    p = T.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    ll = T.Tensor(y) * T.log(p) + T.Tensor(1.0 - y) * T.log(1.0 - p)
    return -T.mean(ll)


# ---------------------------------------------------------------- optimisers


class SGD:
    def __init__(self, params: Sequence[T.Tensor], lr: float = 1e-2):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad


class Adam:
    def __init__(self, params: Sequence[T.Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad ** 2
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ---------------------------------------------------------------- loop


@dataclass
class TrainConfig:
    lr: float = 1e-3
    steps: int = 1000
    batch_size: int = 32
    checkpoint_every: int = 100
    seed: int = 0
    optimizer: str = "adam"
    balanced: bool = True


@dataclass
class TrainResult:
    checkpoints: list[ModelCheckpoint] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, last_checkpoint: ModelCheckpoint, result: TrainResult):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step
        self.last_checkpoint = last_checkpoint
        self.result = result


def train_step(net: Network, opt, x: np.ndarray, y: np.ndarray) -> float:
    for p in net.trainable():
        p.grad = None
    out = net.forward(T.Tensor(x), training=True)
    loss = bce_loss(out.clip, y)
    T.backward(loss)
    for p in net.trainable():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient for {p.name}")  # leave parameters untouched
    opt.step()
    return loss.item()


def train(
    net: Network,
    features: np.ndarray,
    labels,
    cfg: TrainConfig,
    stats: FeatureStats | None = None,
    log_path: str | Path | None = None,
    meta: dict | None = None,
) -> TrainResult:
    """Optimise ``net`` on standardised features [N, frames, bins] and clip labels.

    A checkpoint is taken every ``checkpoint_every`` steps and after the last
    step. Non-finite loss raises :class:`TrainingDiverged` holding the state
    from before the failing step.
    """
    X = np.asarray(features, dtype=np.float64)
    Y = label_matrix(labels).astype(np.float64)
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"{X.shape[0]} feature matrices but {Y.shape[0]} label rows")
    params = net.trainable()
    if cfg.optimizer == "adam":
        opt = Adam(params, lr=cfg.lr)
    elif cfg.optimizer == "sgd":
        opt = SGD(params, lr=cfg.lr)
    else:
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")
    batches = (
        iter(BalancedBatchSampler(Y, cfg.batch_size, cfg.seed)) if cfg.balanced
        else random_batches(len(X), cfg.batch_size, cfg.seed)
    )
    result = TrainResult()
    meta = dict(meta or {})
    log_file = open(log_path, "w", newline="") if log_path else None
    writer = csv.writer(log_file) if log_file else None
    if writer:
        writer.writerow(["step", "loss", "wallclock_ms"])
    t0 = time.perf_counter()
    try:
        for step in range(1, cfg.steps + 1):
            idx = next(batches)
            try:
                loss = train_step(net, opt, X[idx], Y[idx])
            except FloatingPointError:
                loss = math.nan
            if not math.isfinite(loss):
                last = ModelCheckpoint.from_network(net, step - 1, stats, meta)
                raise TrainingDiverged(step, last, result)
            result.losses.append(loss)
            if writer:
                writer.writerow([step, repr(loss), int((time.perf_counter() - t0) * 1000)])
            if step % cfg.checkpoint_every == 0 or step == cfg.steps:
                result.checkpoints.append(ModelCheckpoint.from_network(net, step, stats, meta))
                log.info("step %d loss %.4f", step, loss)
    finally:
        if log_file:
            log_file.close()
    return result
