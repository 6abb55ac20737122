"""Mini-batch Adam loop with validation-based early stopping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .kernel import AdamState, ParamStore, adam_step

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for unusable training configurations or data splits."""


@dataclass
class TrainConfig:
    max_epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-5
    patience: int = 5
    seed: int = 0
    shuffle: bool = True
    max_steps: int | None = None

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("max_epochs, batch_size and patience must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be > 0 and weight_decay >= 0")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    best_so_far: float
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"epoch": self.epoch, "train_loss": self.train_loss,
               "val_loss": self.val_loss, "best_so_far": self.best_so_far}
        out.update(self.extras)
        return out


class EarlyStopping:
    """Tracks the best validation loss.

    Training stops once more than ``patience`` consecutive epochs have failed
    to improve on the best loss (``min_delta`` = 0, strict improvement).
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best, self.best_epoch, self.bad_epochs = val_loss, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs > self.patience


def epoch_order(seed: int, epoch: int, n: int, shuffle: bool = True) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


@dataclass
class FitResult:
    history: list[EpochRecord]
    best_epoch: int
    steps: int
    step_losses: list[float]


def fit(store: ParamStore, n_train: int, train_step: Callable[[np.ndarray], float],
        evaluate: Callable[[], tuple[float, dict]], cfg: TrainConfig,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> FitResult:
    """Optimize ``store`` and leave it holding the best-validation parameters.

    ``train_step(indices)`` must fill ``store.grads`` for the batch and return
    its loss; ``evaluate()`` returns ``(val_loss, extras)``. The whole store
    (running statistics included) is snapshotted at every new best epoch.
    """
    if n_train < 1:
        raise ConfigError("training split is empty")
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    stopper = EarlyStopping(cfg.patience)
    best = store.snapshot()
    history, step_losses = [], []
    steps = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = epoch_order(cfg.seed, epoch, n_train, cfg.shuffle)
        total, seen = 0.0, 0
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            store.zero_grad()
            loss = train_step(idx)
            adam_step(store, state)
            steps += 1
            step_losses.append(loss)
            total += loss * len(idx)
            seen += len(idx)
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break
        val_loss, extras = evaluate()
        if stopper.update(epoch, val_loss):
            best = store.snapshot()
        record = EpochRecord(epoch, total / seen, float(val_loss), float(stopper.best), extras)
        history.append(record)
        log.info("epoch %d train %.6f val %.6f", epoch, record.train_loss, record.val_loss)
        if on_epoch:
            on_epoch(record)
        if stopper.should_stop or (cfg.max_steps is not None and steps >= cfg.max_steps):
            break
    store.load(best)
    return FitResult(history, stopper.best_epoch, steps, step_losses)


def batches(n: int, size: int):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))
