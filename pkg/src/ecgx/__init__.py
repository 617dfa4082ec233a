"""ECG biometrics: pre-processing, autoencoder features, Siamese verification and identification."""

from .dataset import (
    ArrayStore,
    ModelBundle,
    cache_features,
    load_bundle,
    load_dataset,
    save_bundle,
    segment_dataset,
    synthesize_cohort,
)
from .errors import EcgxError
from .metrics import EvalReport, IdentificationReport, compute_accuracy, compute_eer, roc_points
from .models import ConvAutoencoder, FeatureVector, IdentificationHead, SiameseVerifier, extract_features
from .protocol import (
    ComparisonPair,
    ProtocolConfig,
    Scenario,
    generate_pairs,
    make_finetune_pairs,
    make_multi_session_pairs,
    make_single_session_pairs,
    make_training_pairs,
    split_identification,
)
from .records import EcgRecord, Segment, SegmentKind
from .segmentation import detect_r_peaks, segment_record
from .signal import EcgPreprocessor, preprocess_record

__version__ = "0.1.0"

__all__ = [
    "ArrayStore",
    "ComparisonPair",
    "ConvAutoencoder",
    "EcgPreprocessor",
    "EcgRecord",
    "EcgxError",
    "EvalReport",
    "FeatureVector",
    "IdentificationHead",
    "IdentificationReport",
    "ModelBundle",
    "ProtocolConfig",
    "Scenario",
    "Segment",
    "SegmentKind",
    "SiameseVerifier",
    "cache_features",
    "compute_accuracy",
    "compute_eer",
    "detect_r_peaks",
    "extract_features",
    "generate_pairs",
    "load_bundle",
    "load_dataset",
    "make_finetune_pairs",
    "make_multi_session_pairs",
    "make_single_session_pairs",
    "make_training_pairs",
    "preprocess_record",
    "roc_points",
    "save_bundle",
    "segment_dataset",
    "segment_record",
    "split_identification",
    "synthesize_cohort",
]
