"""Mini-batch SGD with classic momentum for MiGNet."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..dataset import ClassWeights, LabeledEvent, class_weights_for, labels_array
from ..errors import ContaminationError, InvalidParameterError, TrainingError
from ..kinematics import Source
from . import layers as L
from .model import MiGNetModel, backward, forward_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 20
    class_weights: Optional[ClassWeights] = None
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidParameterError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise InvalidParameterError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidParameterError("batch_size must be >= 1 and epochs >= 0")


def zero_velocity(model: MiGNetModel) -> Dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in model.params.items()}


def sgd_step(model: MiGNetModel, grads: Dict[str, np.ndarray], velocity: Dict[str, np.ndarray],
             cfg: TrainConfig) -> Tuple[MiGNetModel, Dict[str, np.ndarray]]:
    """v <- momentum * v - lr * g;  theta <- theta + v.  Updates in place."""
    for name, p in model.params.items():
        g = grads[name]
        v = velocity[name]
        if g.shape != p.shape or v.shape != p.shape:
            raise InvalidParameterError(f"shape mismatch for {name}")
        v *= cfg.momentum
        v -= cfg.lr * g
        p += v
    model.touch()
    return model, velocity


@dataclass
class TrainResult:
    model: MiGNetModel
    epoch_losses: List[float]
    batch_losses: List[float]
    clamped: int = 0


def check_trainable(events: Sequence[LabeledEvent]) -> None:
    if not events:
        raise InvalidParameterError("training set is empty")
    for e in events:
        if e.is_test:
            raise ContaminationError(f"test-split event {e.event_id!r} in training set")
        if not e.window.normalized:
            raise InvalidParameterError(f"window {e.event_id!r} is not normalized")


def train(model: MiGNetModel, train_set: Sequence[LabeledEvent], cfg: TrainConfig = TrainConfig(),
          progress=None) -> Tuple[MiGNetModel, List[float]]:
    """Train a copy of ``model``; returns it with the per-epoch mean loss.

    Class weights default to inverse frequency over ``train_set``.  Each
    epoch reshuffles with a generator seeded from ``cfg.seed``; the final
    partial batch is kept.
    """
    result = fit(model, train_set, cfg, progress)
    return result.model, result.epoch_losses


def fit(model: MiGNetModel, train_set: Sequence[LabeledEvent], cfg: TrainConfig = TrainConfig(),
        progress=None) -> TrainResult:
    check_trainable(train_set)
    weights = cfg.class_weights or class_weights_for(train_set)
    w = weights.as_array()
    x = np.stack([e.window.data for e in train_set])
    y = labels_array(train_set)
    n = len(train_set)

    model = model.copy()
    model.train_ids = frozenset(
        e.label.parent_id if e.label.source is Source.AUGMENTED else e.event_id for e in train_set
    )
    velocity = zero_velocity(model)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    epoch_losses, batch_losses = [], []
    clamped = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            probs, cache = forward_batch(model, x[idx])
            batch_loss, c = L.weighted_cross_entropy(probs, y[idx], w)
            clamped += c
            if not np.isfinite(batch_loss):
                raise TrainingError(f"loss diverged at epoch {epoch}",
                                    {"epoch": epoch, "batch_start": start})
            grads = backward(model, cache, y[idx], w)
            sgd_step(model, grads, velocity, cfg)
            batch_losses.append(batch_loss)
            total += batch_loss * idx.size
        epoch_losses.append(total / n)
        log.info("epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, epoch_losses[-1])
        if progress is not None:
            progress(epoch, epoch_losses[-1])
    if clamped:
        log.warning("%d probabilities clamped at 1e-12 during training", clamped)
    return TrainResult(model, epoch_losses, batch_losses, clamped)
