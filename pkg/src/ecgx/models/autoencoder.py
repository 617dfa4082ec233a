"""Per-lead convolutional autoencoder used as the feature extractor."""

from __future__ import annotations

import numpy as np
from sklearn.base import TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..dataset.store import ModelBundle
from ..nn import ModuleGroup, build_network, no_grad, training_loop
from ..nn.tensor import Tensor
from ..records import SEGMENT_LENGTH
from ..validation import check_segments
from .architectures import (
    LATENT_CHANNELS,
    LATENT_LENGTH,
    check_decoder,
    check_encoder,
    decoder_descriptor,
    encoder_descriptor,
)
from .base import INFERENCE_BATCH, NetworkEstimator, load_prefixed, prefixed_state, require_kind


class AutoencoderNetwork(ModuleGroup):
    def __init__(self, encoder_spec, decoder_spec, rng=None):
        check_encoder(encoder_spec)
        check_decoder(decoder_spec)
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(encoder=build_network(encoder_spec, rng), decoder=build_network(decoder_spec, rng))
        self.encoder_spec = list(encoder_spec)
        self.decoder_spec = list(decoder_spec)

    def forward(self, x: Tensor) -> Tensor:
        return self.decoder(self.encoder(x))


class ConvAutoencoder(TransformerMixin, NetworkEstimator):
    """Autoencoder applied to every lead independently.

    ``fit`` takes segments ``(n, n_leads, 400)`` and trains on each lead as a
    one-channel sequence; ``transform`` returns latent features
    ``(n, n_leads, 2, 25)``. Leads never interact, so a model fitted on 1-lead
    data transforms 12-lead data unchanged.
    """

    def __init__(self, max_epochs=200, batch_size=64, learning_rate=1e-3, lr_halving_patience=2,
                 stop_patience=6, validation_fraction=0.1, random_state=0, verbose=False):
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_halving_patience = lr_halving_patience
        self.stop_patience = stop_patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.verbose = verbose

    def initialize(self) -> "ConvAutoencoder":
        """Create untrained (randomly initialized) parameters without fitting."""
        rng = np.random.default_rng(self._seed())
        self.network_ = AutoencoderNetwork(encoder_descriptor(), decoder_descriptor(), rng).eval()
        return self

    def fit(self, X, y=None, X_val=None):
        rows = check_segments(X).reshape(-1, 1, SEGMENT_LENGTH)
        if X_val is None:
            train_idx, val_idx = self._holdout(len(rows))
            train, val = rows[train_idx], rows[val_idx]
        else:
            train, val = rows, check_segments(X_val).reshape(-1, 1, SEGMENT_LENGTH)
        self.initialize()
        result = training_loop(
            self.network_, lambda m, x: m(x), (train, train), (val, val),
            self._train_config("mse"), verbose=self.verbose,
        )
        self._record(result)
        return self

    def _per_lead(self, X, fn, out_shape):
        X = check_segments(X)
        n, n_leads, _ = X.shape
        out = np.empty((n, n_leads) + out_shape, dtype=np.float32)
        self.network_.eval()
        with no_grad():
            for lead in range(n_leads):
                for s in range(0, n, INFERENCE_BATCH):
                    block = Tensor(X[s : s + INFERENCE_BATCH, lead : lead + 1])
                    out[s : s + INFERENCE_BATCH, lead] = fn(block).data
        return out

    def transform(self, X):
        check_is_fitted(self, "network_")
        return self._per_lead(X, self.network_.encoder, (LATENT_CHANNELS, LATENT_LENGTH))

    def reconstruct(self, X):
        """Reconstructed segments ``(n, n_leads, 400)``."""
        check_is_fitted(self, "network_")
        return self._per_lead(X, self.network_, (1, SEGMENT_LENGTH))[:, :, 0, :]

    def reconstruction_error(self, X) -> float:
        X = check_segments(X)
        diff = self.reconstruct(X).astype(np.float64) - X
        return float(np.mean(diff**2))

    def score(self, X, y=None) -> float:
        return -self.reconstruction_error(X)

    # ------------------------------------------------------------ bundles
    def to_bundle(self) -> ModelBundle:
        check_is_fitted(self, "network_")
        net = self.network_
        return ModelBundle(
            kind="Autoencoder",
            arch_descriptor={"encoder": net.encoder_spec, "decoder": net.decoder_spec},
            parameters=prefixed_state({"encoder": net.encoder, "decoder": net.decoder}),
            metadata={"n_iter": int(getattr(self, "n_iter_", 0))},
        )

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "ConvAutoencoder":
        require_kind(bundle, "Autoencoder")
        arch = bundle.arch_descriptor
        est = cls()
        est.network_ = AutoencoderNetwork(arch["encoder"], arch["decoder"])
        load_prefixed(est.network_.encoder, bundle, "encoder")
        load_prefixed(est.network_.decoder, bundle, "decoder")
        est.network_.eval()
        est.n_iter_ = bundle.metadata.get("n_iter", 0)
        return est
