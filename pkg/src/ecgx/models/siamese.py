"""Siamese verifier: shared branch, per-feature squared distance, sigmoid head."""

from __future__ import annotations

import numpy as np
from sklearn.base import ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..dataset.store import ModelBundle
from ..errors import ModelError
from ..nn import ModuleGroup, build_network, no_grad, training_loop
from ..nn import functional as F
from ..nn.tensor import Tensor
from ..validation import check_binary_labels, check_features, check_pairs
from .architectures import EMBEDDING_SIZE, branch_descriptor, check_branch, check_head, head_descriptor
from .base import INFERENCE_BATCH, NetworkEstimator, load_prefixed, prefixed_state, require_kind
from .pairs import pair_sides

SIAMESE_KINDS = {1: "Siamese1L", 12: "Siamese12L"}


class SiameseNetwork(ModuleGroup):
    def __init__(self, n_leads, branch_spec, head_spec, rng=None):
        check_branch(branch_spec, n_leads)
        check_head(head_spec)
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(branch=build_network(branch_spec, rng), head=build_network(head_spec, rng))
        self.n_leads = n_leads
        self.branch_spec = list(branch_spec)
        self.head_spec = list(head_spec)

    def forward(self, a: Tensor, b: Tensor) -> Tensor:
        if self.training:
            # one branch pass over both sides so batch statistics cover the pair mixture
            n = a.shape[0]
            both = self.branch(F.concat([a, b]))
            ea, eb = F.take(both, 0, n), F.take(both, n, 2 * n)
        else:
            # separate, identically shaped passes keep f(a, b) == f(b, a) bit-exact
            ea, eb = self.branch(a), self.branch(b)
        return self.head(F.squared_difference(ea, eb))

    def __call__(self, a, b):
        return self.forward(a, b)


class SiameseVerifier(ClassifierMixin, NetworkEstimator):
    """Binary genuine/impostor classifier over pairs of feature tensors.

    ``X`` holds pairs ``(n, 2, n_leads, 2, 25)`` (or a lazy
    :class:`~ecgx.models.pairs.PairArray`); ``y`` is 1 for genuine and 0 for
    impostor. ``decision_function`` returns the match score in (0, 1).
    With ``warm_start=True`` a second ``fit`` continues from the current
    weights, which is how fine-tuning is done.
    """

    def __init__(self, n_leads=1, max_epochs=200, batch_size=64, learning_rate=1e-3, lr_halving_patience=2,
                 stop_patience=6, validation_fraction=0.1, warm_start=False, random_state=0, verbose=False):
        self.n_leads = n_leads
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_halving_patience = lr_halving_patience
        self.stop_patience = stop_patience
        self.validation_fraction = validation_fraction
        self.warm_start = warm_start
        self.random_state = random_state
        self.verbose = verbose

    def initialize(self) -> "SiameseVerifier":
        rng = np.random.default_rng(self._seed())
        self.network_ = SiameseNetwork(self.n_leads, branch_descriptor(self.n_leads), head_descriptor(), rng).eval()
        self.classes_ = np.array([0, 1])
        return self

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_pairs(X, self.n_leads)
        y = check_binary_labels(y, len(X))
        if X_val is None:
            train_idx, val_idx = self._holdout(len(X))
            train, val = self._sides(X, y, train_idx), self._sides(X, y, val_idx)
        else:
            X_val = check_pairs(X_val, self.n_leads)
            train = self._sides(X, y)
            val = self._sides(X_val, check_binary_labels(y_val, len(X_val)))
        if not (self.warm_start and hasattr(self, "network_")):
            self.initialize()
        result = training_loop(
            self.network_, lambda m, a, b: m(a, b), train, val, self._train_config("bce"), verbose=self.verbose,
        )
        self._record(result)
        return self

    @staticmethod
    def _sides(X, y, idx=None):
        if idx is not None:
            X = X[idx] if isinstance(X, np.ndarray) else type(X)(X.pool, X.left[idx], X.right[idx])
            y = y[idx]
        a, b = pair_sides(X)
        return a, b, y.reshape(-1, 1)

    # ------------------------------------------------------------ inference
    def score_pairs(self, A, B) -> np.ndarray:
        """Match scores for aligned feature batches ``A`` and ``B`` ``(n, n_leads, 2, 25)``."""
        check_is_fitted(self, "network_")
        A = check_features(A, self.network_.n_leads)
        B = check_features(B, self.network_.n_leads)
        if len(A) != len(B):
            raise ModelError(f"score_pairs needs equally many probes and references ({len(A)} vs {len(B)})")
        n = len(A)
        a, b = A.reshape(n, -1, A.shape[-1]), B.reshape(n, -1, B.shape[-1])
        return self._scores(a, b)

    def _scores(self, a, b) -> np.ndarray:
        out = np.empty(len(a), dtype=np.float32)
        self.network_.eval()
        with no_grad():
            for s in range(0, len(a), INFERENCE_BATCH):
                idx = slice(s, s + INFERENCE_BATCH)
                out[idx] = self.network_(Tensor(a[idx]), Tensor(b[idx])).data[:, 0]
        return out

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_pairs(X, self.network_.n_leads)
        return self._scores(*pair_sides(X))

    def predict_proba(self, X) -> np.ndarray:
        s = self.decision_function(X)
        return np.column_stack([1 - s, s])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.5).astype(int)

    def embed(self, X) -> np.ndarray:
        """Branch output ``(n, 1024)`` for features ``(n, n_leads, 2, 25)``."""
        check_is_fitted(self, "network_")
        X = check_features(X, self.network_.n_leads)
        flat = X.reshape(len(X), -1, X.shape[-1])
        out = np.empty((len(X), EMBEDDING_SIZE), dtype=np.float32)
        self.network_.eval()
        with no_grad():
            for s in range(0, len(X), INFERENCE_BATCH):
                out[s : s + INFERENCE_BATCH] = self.network_.branch(Tensor(flat[s : s + INFERENCE_BATCH])).data
        return out

    # ------------------------------------------------------------ bundles
    def to_bundle(self) -> ModelBundle:
        check_is_fitted(self, "network_")
        net = self.network_
        if net.n_leads not in SIAMESE_KINDS:
            raise ModelError(f"bundles exist for 1-lead and 12-lead verifiers, not {net.n_leads}-lead")
        return ModelBundle(
            kind=SIAMESE_KINDS[net.n_leads],
            arch_descriptor={"n_leads": net.n_leads, "branch": net.branch_spec, "head": net.head_spec},
            parameters=prefixed_state({"branch": net.branch, "head": net.head}),
            metadata={"n_iter": int(getattr(self, "n_iter_", 0))},
        )

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "SiameseVerifier":
        require_kind(bundle, *SIAMESE_KINDS.values())
        arch = bundle.arch_descriptor
        est = cls(n_leads=arch["n_leads"])
        est.network_ = SiameseNetwork(arch["n_leads"], arch["branch"], arch["head"])
        load_prefixed(est.network_.branch, bundle, "branch")
        load_prefixed(est.network_.head, bundle, "head")
        est.network_.eval()
        est.classes_ = np.array([0, 1])
        est.n_iter_ = bundle.metadata.get("n_iter", 0)
        return est
