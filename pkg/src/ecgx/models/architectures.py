"""Layer descriptors of the autoencoder, Siamese branch/head and identification classifier."""

from __future__ import annotations

from typing import List

from ..errors import ShapeMismatch
from ..nn import trace_shapes
from ..records import SEGMENT_LENGTH

LATENT_CHANNELS = 2
LATENT_LENGTH = 25
EMBEDDING_SIZE = 1024
ENCODER_CHANNELS = (1, 16, 32, 64, 128)
DECODER_CHANNELS = (2, 128, 64, 32, 16)
BRANCH_CHANNELS = (64, 128)
HEAD_HIDDEN = 256
ENCODER_LENGTHS = (400, 200, 100, 50, 25)


def _conv(cin, cout, k):
    return {"layer": "conv1d", "in_channels": cin, "out_channels": cout, "kernel_size": k, "padding": k // 2}


def _bn(c):
    return {"layer": "batchnorm", "num_features": c}


def _dense(fin, fout):
    return {"layer": "dense", "in_features": fin, "out_features": fout}


RELU = {"layer": "relu"}
POOL = {"layer": "maxpool", "width": 2}
UPSAMPLE = {"layer": "upsample", "factor": 2}


def encoder_descriptor() -> List[dict]:
    layers: List[dict] = []
    for cin, cout in zip(ENCODER_CHANNELS, ENCODER_CHANNELS[1:]):
        layers += [_conv(cin, cout, 5), _bn(cout), dict(RELU), dict(POOL)]
    layers.append(_conv(ENCODER_CHANNELS[-1], LATENT_CHANNELS, 3))
    return layers


def decoder_descriptor() -> List[dict]:
    layers: List[dict] = []
    for cin, cout in zip(DECODER_CHANNELS, DECODER_CHANNELS[1:]):
        layers += [dict(UPSAMPLE), _conv(cin, cout, 5), _bn(cout), dict(RELU)]
    layers.append(_conv(DECODER_CHANNELS[-1], 1, 5))
    return layers


def branch_descriptor(n_leads: int) -> List[dict]:
    c1, c2 = BRANCH_CHANNELS
    flat = c2 * (LATENT_LENGTH // 2 // 2)
    return [
        _conv(LATENT_CHANNELS * n_leads, c1, 3), _bn(c1), dict(RELU), dict(POOL),
        _conv(c1, c2, 3), _bn(c2), dict(RELU), dict(POOL),
        {"layer": "flatten"},
        _dense(flat, EMBEDDING_SIZE), dict(RELU),
    ]


def head_descriptor() -> List[dict]:
    return [_dense(EMBEDDING_SIZE, HEAD_HIDDEN), dict(RELU), _dense(HEAD_HIDDEN, 1), {"layer": "sigmoid"}]


def classifier_descriptor(n_subjects: int) -> List[dict]:
    return [_dense(EMBEDDING_SIZE, n_subjects), {"layer": "softmax"}]


# ------------------------------------------------------------------ checks

def check_encoder(descriptor) -> None:
    """The encoder must halve 400 samples exactly four times and emit ``(2, 25)``."""
    shapes = trace_shapes(descriptor, (1, SEGMENT_LENGTH))
    pooled = [shapes[0][1]] + [shapes[i + 1][1] for i, s in enumerate(descriptor) if s["layer"] == "maxpool"]
    if tuple(pooled) != ENCODER_LENGTHS or shapes[-1] != (LATENT_CHANNELS, LATENT_LENGTH):
        raise ShapeMismatch(
            f"encoder must map (1, 400) through lengths {ENCODER_LENGTHS} to (2, 25); "
            f"got lengths {tuple(pooled)} and output {shapes[-1]}"
        )


def check_decoder(descriptor) -> None:
    out = trace_shapes(descriptor, (LATENT_CHANNELS, LATENT_LENGTH))[-1]
    if out != (1, SEGMENT_LENGTH):
        raise ShapeMismatch(f"decoder must map (2, 25) to (1, 400), got {out}")


def check_branch(descriptor, n_leads: int) -> None:
    out = trace_shapes(descriptor, (LATENT_CHANNELS * n_leads, LATENT_LENGTH))[-1]
    if out != (EMBEDDING_SIZE,):
        raise ShapeMismatch(f"Siamese branch must emit ({EMBEDDING_SIZE},), got {out}")


def check_head(descriptor) -> None:
    out = trace_shapes(descriptor, (EMBEDDING_SIZE,))[-1]
    if out != (1,):
        raise ShapeMismatch(f"Siamese head must emit a single score, got {out}")
