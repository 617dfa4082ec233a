"""Shared plumbing for the network estimators."""

from __future__ import annotations

import hashlib
from typing import Dict, Tuple

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import ModelError, ShapeMismatch
from ..nn import Module, TrainConfig
from ..nn.training import TrainResult
from ..dataset.store import ModelBundle

INFERENCE_BATCH = 256


class NetworkEstimator(BaseEstimator):
    """Training hyper-parameters common to every network in the package."""

    def _seed(self) -> int:
        return 0 if self.random_state is None else int(self.random_state)

    def _train_config(self, loss: str) -> TrainConfig:
        return TrainConfig(
            initial_lr=self.learning_rate,
            lr_halving_patience=self.lr_halving_patience,
            stop_patience=self.stop_patience,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            loss=loss,
            seed=self._seed(),
        )

    def _holdout(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Random train/validation index split used when no validation set is given."""
        if n < 3:
            raise ModelError(f"need at least 3 samples to hold out a validation split, got {n}")
        order = np.random.default_rng(self._seed() + 1).permutation(n)
        n_val = min(max(1, int(round(self.validation_fraction * n))), n - 2)
        return np.sort(order[n_val:]), np.sort(order[:n_val])

    def _record(self, result: TrainResult) -> None:
        self.history_ = result.history
        self.n_iter_ = len(result.history)
        self.best_epoch_ = result.best_epoch
        self.best_validation_loss_ = result.best_val_loss


def prefixed_state(modules: Dict[str, Module]) -> Dict[str, np.ndarray]:
    state = {}
    for prefix, module in modules.items():
        for name, value in module.state_dict().items():
            state[f"{prefix}.{name}"] = np.asarray(value, dtype=np.float32)
    return state


def load_prefixed(module: Module, bundle: ModelBundle, prefix: str) -> None:
    lead = prefix + "."
    state = {k[len(lead):]: v for k, v in bundle.parameters.items() if k.startswith(lead)}
    try:
        module.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise ShapeMismatch(f"{bundle.kind} bundle parameters do not match its descriptor: {exc}") from exc
    expected = set(module.state_dict())
    extra = set(state) - expected
    if extra:
        raise ShapeMismatch(f"{bundle.kind} bundle has unexpected parameters {sorted(extra)[:3]}")


def module_checksum(module: Module) -> str:
    """SHA-256 over every parameter and buffer of ``module``."""
    h = hashlib.sha256()
    for name, value in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return h.hexdigest()


def require_kind(bundle: ModelBundle, *kinds: str) -> None:
    if bundle.kind not in kinds:
        raise ModelError(f"expected a {' or '.join(kinds)} bundle, got {bundle.kind}")
