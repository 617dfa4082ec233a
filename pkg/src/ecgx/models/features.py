"""Feature-vector type and bundle-driven forward passes for single inputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..dataset.store import ModelBundle
from ..errors import DimensionMismatch, LeadCountMismatch, ShapeMismatch
from ..records import SEGMENT_LENGTH, Segment, SegmentKind
from .architectures import LATENT_CHANNELS, LATENT_LENGTH
from .autoencoder import ConvAutoencoder
from .identification import IdentificationHead
from .siamese import SiameseVerifier


@dataclass(frozen=True)
class FeatureVector:
    """Latent features ``(n_leads, 2, 25)`` of one segment."""

    values: np.ndarray
    source_segment_kind: Optional[SegmentKind] = None
    subject_id: Optional[str] = None
    session_index: Optional[int] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 3 or values.shape[1:] != (LATENT_CHANNELS, LATENT_LENGTH):
            raise ShapeMismatch(f"feature values must be (n_leads, 2, 25), got {values.shape}")
        if not np.isfinite(values).all():
            raise ShapeMismatch("feature values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n_leads(self) -> int:
        return self.values.shape[0]


def _segment_array(segment) -> Tuple[np.ndarray, dict]:
    if isinstance(segment, Segment):
        meta = {"source_segment_kind": segment.kind, "subject_id": segment.subject_id,
                "session_index": segment.session_index}
        samples = segment.samples
    else:
        meta, samples = {}, np.asarray(segment)
    if samples.ndim == 1:
        samples = samples[np.newaxis]
    if samples.ndim != 2 or samples.shape[1] != SEGMENT_LENGTH:
        raise ShapeMismatch(f"segment must be (n_leads, {SEGMENT_LENGTH}), got {samples.shape}")
    return samples[np.newaxis], meta


def autoencoder_forward(segment, bundle: ModelBundle) -> Tuple[FeatureVector, np.ndarray]:
    """Latent features and reconstruction ``(n_leads, 400)`` of one segment."""
    ae = ConvAutoencoder.from_bundle(bundle)
    x, meta = _segment_array(segment)
    return FeatureVector(ae.transform(x)[0], **meta), ae.reconstruct(x)[0]


def extract_features(segment, bundle: ModelBundle) -> FeatureVector:
    ae = ConvAutoencoder.from_bundle(bundle)
    x, meta = _segment_array(segment)
    return FeatureVector(ae.transform(x)[0], **meta)


def _values(feature) -> np.ndarray:
    return feature.values if isinstance(feature, FeatureVector) else FeatureVector(feature).values


def siamese_forward(feat_a, feat_b, bundle: ModelBundle) -> float:
    """Match score in (0, 1) of two feature vectors."""
    verifier = SiameseVerifier.from_bundle(bundle)
    a, b = _values(feat_a), _values(feat_b)
    for v in (a, b):
        if v.shape[0] != verifier.network_.n_leads:
            raise LeadCountMismatch(f"{bundle.kind} expects {verifier.network_.n_leads} leads, got {v.shape[0]}")
    return float(verifier.score_pairs(a[np.newaxis], b[np.newaxis])[0])


def identification_forward(feature, bundle: ModelBundle, n_subjects: int) -> np.ndarray:
    """Softmax probabilities over ``n_subjects`` enrolled subjects."""
    head = IdentificationHead.from_bundle(bundle)
    if head.network_.n_outputs != n_subjects:
        raise DimensionMismatch(f"bundle classifies {head.network_.n_outputs} subjects, not {n_subjects}")
    v = _values(feature)
    if v.shape[0] != head.network_.n_leads:
        raise LeadCountMismatch(f"identification bundle expects {head.network_.n_leads} leads, got {v.shape[0]}")
    return head.predict_proba(v[np.newaxis])[0]
