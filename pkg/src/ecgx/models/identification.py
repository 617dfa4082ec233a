"""Closed-set identification: frozen Siamese branch plus a trainable softmax layer."""

from __future__ import annotations

import copy

import numpy as np
from sklearn.base import ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..dataset.store import ModelBundle
from ..errors import DimensionMismatch, ModelError, ShapeMismatch
from ..nn import ModuleGroup, build_network, no_grad, training_loop
from ..nn.tensor import Tensor
from ..validation import check_features
from .architectures import EMBEDDING_SIZE, check_branch, classifier_descriptor
from .base import INFERENCE_BATCH, NetworkEstimator, load_prefixed, module_checksum, prefixed_state, require_kind
from .siamese import SiameseVerifier


class IdentificationNetwork(ModuleGroup):
    def __init__(self, n_leads, branch_spec, classifier_spec, rng=None):
        check_branch(branch_spec, n_leads)
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(branch=build_network(branch_spec, rng), classifier=build_network(classifier_spec, rng))
        if classifier_spec[0].get("in_features") != EMBEDDING_SIZE:
            raise ShapeMismatch(f"classifier must take the {EMBEDDING_SIZE}-dim branch output")
        self.n_leads = n_leads
        self.branch_spec = list(branch_spec)
        self.classifier_spec = list(classifier_spec)

    @property
    def n_outputs(self) -> int:
        return int(self.classifier_spec[0]["out_features"])

    def forward(self, x: Tensor) -> Tensor:
        return self.classifier(self.branch(x))


class IdentificationHead(ClassifierMixin, NetworkEstimator):
    """Softmax classifier over subjects on top of a trained verifier's branch.

    Only the final dense layer is trained: the branch is copied from
    ``verifier`` and never updated, so its embeddings are computed once up
    front. ``X`` holds feature tensors ``(n, n_leads, 2, 25)``.
    """

    def __init__(self, verifier=None, max_epochs=200, batch_size=64, learning_rate=1e-3, lr_halving_patience=2,
                 stop_patience=6, validation_fraction=0.1, random_state=0, verbose=False):
        self.verifier = verifier
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_halving_patience = lr_halving_patience
        self.stop_patience = stop_patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.verbose = verbose

    def _backbone(self):
        if isinstance(self.verifier, SiameseVerifier):
            check_is_fitted(self.verifier, "network_")
            net = self.verifier.network_
            return net.n_leads, net.branch_spec, net.branch
        raise ModelError("IdentificationHead needs a fitted SiameseVerifier as `verifier`")

    def fit(self, X, y, X_val=None, y_val=None):
        n_leads, branch_spec, branch = self._backbone()
        X = check_features(X, n_leads)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        rng = np.random.default_rng(self._seed())
        self.network_ = IdentificationNetwork(n_leads, branch_spec, classifier_descriptor(len(self.classes_)), rng)
        self.network_.members["branch"] = copy.deepcopy(branch)
        self.backbone_checksum_ = module_checksum(self.network_.branch)

        emb = self._embed(X)
        if X_val is None:
            train_idx, val_idx = self._holdout(len(X))
            train, val = (emb[train_idx], self._onehot(y[train_idx])), (emb[val_idx], self._onehot(y[val_idx]))
        else:
            X_val = check_features(X_val, n_leads)
            train, val = (emb, self._onehot(y)), (self._embed(X_val), self._onehot(np.asarray(y_val)))
        classifier = self.network_.classifier
        result = training_loop(
            classifier, lambda m, e: m(e), train, val, self._train_config("cce"),
            params=classifier.parameters(), verbose=self.verbose,
        )
        self._record(result)
        self.network_.eval()
        return self

    def _onehot(self, y) -> np.ndarray:
        pos = np.searchsorted(self.classes_, y)
        if np.any(pos >= len(self.classes_)) or np.any(self.classes_[np.minimum(pos, len(self.classes_) - 1)] != y):
            raise ModelError("validation labels contain subjects absent from training")
        out = np.zeros((len(y), len(self.classes_)), dtype=np.float32)
        out[np.arange(len(y)), pos] = 1.0
        return out

    def _embed(self, X) -> np.ndarray:
        flat = X.reshape(len(X), -1, X.shape[-1])
        out = np.empty((len(X), EMBEDDING_SIZE), dtype=np.float32)
        branch = self.network_.branch.eval()
        with no_grad():
            for s in range(0, len(X), INFERENCE_BATCH):
                out[s : s + INFERENCE_BATCH] = branch(Tensor(flat[s : s + INFERENCE_BATCH])).data
        return out

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_features(X, self.network_.n_leads)
        emb = self._embed(X)
        self.network_.classifier.eval()
        with no_grad():
            return self.network_.classifier(Tensor(emb)).data.astype(np.float64)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    # ------------------------------------------------------------ bundles
    def to_bundle(self) -> ModelBundle:
        check_is_fitted(self, "network_")
        net = self.network_
        return ModelBundle(
            kind="IdentHead",
            arch_descriptor={"n_leads": net.n_leads, "branch": net.branch_spec, "classifier": net.classifier_spec},
            parameters=prefixed_state({"branch": net.branch, "classifier": net.classifier}),
            metadata={"classes": [str(c) for c in self.classes_], "n_iter": int(getattr(self, "n_iter_", 0))},
        )

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "IdentificationHead":
        require_kind(bundle, "IdentHead")
        arch = bundle.arch_descriptor
        est = cls()
        est.network_ = IdentificationNetwork(arch["n_leads"], arch["branch"], arch["classifier"])
        load_prefixed(est.network_.branch, bundle, "branch")
        load_prefixed(est.network_.classifier, bundle, "classifier")
        est.network_.eval()
        classes = bundle.metadata.get("classes") or [str(i) for i in range(est.network_.n_outputs)]
        if len(classes) != est.network_.n_outputs:
            raise DimensionMismatch(f"bundle lists {len(classes)} classes for {est.network_.n_outputs} outputs")
        est.classes_ = np.asarray(classes)
        est.backbone_checksum_ = module_checksum(est.network_.branch)
        est.n_iter_ = bundle.metadata.get("n_iter", 0)
        return est

