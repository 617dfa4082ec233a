"""Mini-batch training with plateau-driven learning-rate halving and early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..errors import EmptyDataset
from . import functional as F
from .layers import Module
from .optim import Adam
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    initial_lr: float = 1e-3
    lr_halving_patience: int = 2
    stop_patience: int = 6
    batch_size: int = 64
    max_epochs: int = 200
    loss: str = "mse"
    seed: int = 0
    min_delta: float = 1e-6

    def __post_init__(self):
        if self.stop_patience < self.lr_halving_patience:
            raise ValueError("stop_patience must be >= lr_halving_patience")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")


class PlateauSchedule:
    """Tracks validation loss; halves the learning rate and signals stopping.

    An epoch "does not decrease" when its loss is not below the best so far
    by more than ``min_delta``. The rate halves at every ``halving_patience``
    consecutive such epochs; training stops at ``stop_patience``.
    """

    def __init__(self, lr: float, halving_patience: int = 2, stop_patience: int = 6, min_delta: float = 1e-6):
        self.lr = lr
        self.halving_patience = halving_patience
        self.stop_patience = stop_patience
        self.min_delta = min_delta
        self.best = np.inf
        self.best_epoch = -1
        self.stale = 0
        self.epoch = 0
        self.stop = False

    def step(self, val_loss: float) -> bool:
        """Record one epoch; returns True when it is the new best."""
        self.epoch += 1
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.best_epoch = self.epoch
            self.stale = 0
            return True
        self.stale += 1
        if self.stale % self.halving_patience == 0:
            self.lr /= 2.0
        if self.stale >= self.stop_patience:
            self.stop = True
        return False


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    history: List[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False


def _batches(n: int, batch_size: int, order: np.ndarray):
    starts = list(range(0, n, batch_size))
    # a trailing batch of one sample cannot feed batch norm; fold it into the previous batch
    if len(starts) > 1 and n - starts[-1] == 1:
        starts.pop()
    for i, s in enumerate(starts):
        stop = starts[i + 1] if i + 1 < len(starts) else n
        yield order[s:stop]


def evaluate_loss(model: Module, forward: Callable, data: Sequence[np.ndarray], loss: str,
                  batch_size: int = 256) -> float:
    model.eval()
    *inputs, target = data
    n = len(target)
    total = 0.0
    with no_grad():
        for s in range(0, n, batch_size):
            idx = slice(s, s + batch_size)
            pred = forward(model, *[Tensor(a[idx]) for a in inputs])
            total += float(F.loss(pred, target[idx], loss).item()) * len(target[idx])
    return total / n


def training_loop(model: Module, forward: Callable, train: Sequence[np.ndarray], val: Sequence[np.ndarray],
                  config: TrainConfig, params: Optional[Sequence[Tensor]] = None,
                  verbose: bool = False) -> TrainResult:
    """Train ``model`` in place and restore the parameters of the best validation epoch.

    ``train`` and ``val`` are tuples of arrays indexed along axis 0 whose last
    element is the target; ``forward(model, *inputs)`` returns the prediction.
    ``params`` restricts which tensors are optimized (defaults to all).
    """
    if len(train) < 2 or len(train[-1]) == 0:
        raise EmptyDataset("training set is empty")
    if len(val) < 2 or len(val[-1]) == 0:
        raise EmptyDataset("validation set is empty")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(params if params is not None else model.parameters(), lr=config.initial_lr)
    schedule = PlateauSchedule(config.initial_lr, config.lr_halving_patience, config.stop_patience,
                               config.min_delta)
    result = TrainResult()
    best_state = model.state_dict()
    *inputs, target = train
    n = len(target)
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = rng.permutation(n)
        running, seen = 0.0, 0
        for idx in _batches(n, config.batch_size, order):
            optimizer.zero_grad()
            pred = forward(model, *[Tensor(a[idx]) for a in inputs])
            batch_loss = F.loss(pred, target[idx], config.loss)
            batch_loss.backward()
            optimizer.step()
            running += float(batch_loss.item()) * len(idx)
            seen += len(idx)
        val_loss = evaluate_loss(model, forward, val, config.loss)
        lr_used = optimizer.lr
        if schedule.step(val_loss):
            best_state = model.state_dict()
            result.best_epoch, result.best_val_loss = epoch, val_loss
        optimizer.lr = schedule.lr
        result.history.append(EpochLog(epoch, running / seen, val_loss, lr_used))
        if verbose:
            logger.info("epoch %d train %.6f val %.6f lr %.2e", epoch, running / seen, val_loss, lr_used)
        if schedule.stop:
            result.stopped_early = True
            break
    model.load_state_dict(best_state)
    model.eval()
    return result
