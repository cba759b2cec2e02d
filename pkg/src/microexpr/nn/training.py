"""Epoch loop with ADAM, deterministic shuffling and loss-plateau early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import Adam


@dataclass
class TrainConfig:
    max_epochs: int = 100
    patience: int | None = None      # epochs without loss improvement before stopping
    min_delta: float = 0.0           # improvement smaller than this does not reset patience
    batch_size: int | None = None    # None: one full batch of whole sequences per epoch
    seed: int = 0
    shuffle: bool = True
    lr: float = 1e-5
    lr_decay: float = 1e-6
    decay_mode: str = "lr"
    loss_on: str = "final"           # "final": last-step prediction; "mean": averaged over steps
    stop_accuracy: float | None = None   # optional: stop once training accuracy reaches this

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.loss_on not in ("final", "mean"):
            raise ValueError(f"unknown loss_on {self.loss_on!r}")


@dataclass
class FitResult:
    loss_history: list[float] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False
    final_train_accuracy: float | None = None


def fit(model, inputs, labels: np.ndarray, cfg: TrainConfig) -> FitResult:
    """Train ``model`` in place; returns the per-epoch loss history.

    ``model`` provides ``parameters()``, ``training_step(inputs, labels,
    loss_on)`` filling parameter gradients and returning the batch loss,
    ``batch_loss(inputs, labels, loss_on)`` (forward only) and
    ``predict_classes(inputs)``.  ``inputs`` is indexable along the first
    axis, one whole sequence per element.
    """
    n = len(labels)
    if n == 0:
        raise ValueError("training set is empty")
    labels = np.asarray(labels, dtype=np.intp)
    opt = Adam(model.parameters(), lr=cfg.lr, decay=cfg.lr_decay, decay_mode=cfg.decay_mode)
    rng = np.random.default_rng(cfg.seed)
    batch = n if cfg.batch_size is None else min(cfg.batch_size, n)

    best = model.batch_loss(inputs, labels, cfg.loss_on)   # pre-training baseline
    stale = 0
    result = FitResult()
    for _ in range(cfg.max_epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, batch):
            take = order[start:start + batch]
            opt.zero_grad()
            loss = model.training_step(inputs[take], labels[take], cfg.loss_on)
            opt.step()
            total += loss * len(take)
        epoch_loss = total / n
        result.loss_history.append(epoch_loss)
        result.epochs_run += 1
        if epoch_loss < best - cfg.min_delta:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
        if cfg.stop_accuracy is not None:
            acc = float((model.predict_classes(inputs) == labels).mean())
            result.final_train_accuracy = acc
            if acc >= cfg.stop_accuracy:
                result.stopped_early = True
                break
        if cfg.patience is not None and stale >= cfg.patience:
            result.stopped_early = True
            break
    return result
