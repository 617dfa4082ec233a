"""Autoencoder feature extractor, Siamese verifier and identification head."""

from .architectures import (
    EMBEDDING_SIZE,
    branch_descriptor,
    check_encoder,
    classifier_descriptor,
    decoder_descriptor,
    encoder_descriptor,
    head_descriptor,
)
from .autoencoder import AutoencoderNetwork, ConvAutoencoder
from .base import module_checksum
from .features import (
    FeatureVector,
    autoencoder_forward,
    extract_features,
    identification_forward,
    siamese_forward,
)
from .identification import IdentificationHead, IdentificationNetwork
from .pairs import PairArray
from .siamese import SiameseNetwork, SiameseVerifier

__all__ = [
    "EMBEDDING_SIZE",
    "AutoencoderNetwork",
    "ConvAutoencoder",
    "FeatureVector",
    "IdentificationHead",
    "IdentificationNetwork",
    "PairArray",
    "SiameseNetwork",
    "SiameseVerifier",
    "autoencoder_forward",
    "branch_descriptor",
    "check_encoder",
    "classifier_descriptor",
    "decoder_descriptor",
    "encoder_descriptor",
    "extract_features",
    "head_descriptor",
    "identification_forward",
    "module_checksum",
    "siamese_forward",
]
