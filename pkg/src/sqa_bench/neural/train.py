"""Mini-batch gradient descent on the span model's gold start/end likelihood."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidSpan
from .model import SpanModel


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    epochs: int = 12
    batch_size: int = 32
    dropout: float = 0.1
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0 and batch_size >= 1 required")

    def to_dict(self):
        return {"lr": self.lr, "epochs": self.epochs, "batch_size": self.batch_size,
                "dropout": self.dropout, "seed": self.seed, "clip_norm": self.clip_norm}


def check_spans(examples):
    for ex in examples:
        if ex.span is None:
            raise InvalidSpan(f"example {ex.id} has no answer span")
        i, j = ex.span
        if not 0 <= i <= j < len(ex.doc_words):
            raise InvalidSpan(f"example {ex.id}: span {ex.span} outside document of "
                              f"{len(ex.doc_words)} words")


def sgd_step(params, lr, clip_norm=None):
    """Apply one update; returns the pre-clipping gradient norm."""
    grads = [p.grad for p in params if p.grad is not None]
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    scale = lr
    if clip_norm and norm > clip_norm:
        scale = lr * clip_norm / norm
    for p in params:
        if p.grad is not None:
            p.data -= scale * p.grad
            p.grad = None
    return norm


def train(model: SpanModel, examples, config: TrainConfig, log=None):
    """Train ``model`` in place; returns the mean loss of each epoch.

    Batches are ordered by a seeded permutation per epoch, so the loss curve is
    reproducible for a given seed.
    """
    examples = list(examples)
    check_spans(examples)
    rng = np.random.default_rng(config.seed)
    params = list(model.parameters().values())
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        total, n = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start:start + config.batch_size]]
            loss = model.loss(batch, train=True, dropout=config.dropout, rng=rng)
            loss.backward()
            sgd_step(params, config.lr, config.clip_norm)
            total += float(loss.data) * len(batch)
            n += len(batch)
        losses.append(total / max(n, 1))
        if log is not None:
            log(f"epoch {epoch}: loss {losses[-1]:.4f}")
    return losses
