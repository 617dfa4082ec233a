"""Input checks shared by the estimators.

Each helper accepts array-likes (or lists of domain objects), coerces to a
C-contiguous float32 array and raises :class:`~ecgx.errors.ShapeMismatch` or
:class:`~ecgx.errors.LeadCountMismatch` with a message naming what was expected.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.utils import check_array

from .errors import DataError, LeadCountMismatch, ShapeMismatch
from .records import SEGMENT_LENGTH, Segment

FEATURE_CHANNELS = 2
FEATURE_LENGTH = 25


def _as_float32(X, what: str) -> np.ndarray:
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Segment):
        X = np.stack([s.samples for s in X])
    elif isinstance(X, Segment):
        X = X.samples[np.newaxis]
    X = np.asarray(X)
    if X.size == 0:
        return np.ascontiguousarray(X, dtype=np.float32)
    try:
        return check_array(X, allow_nd=True, dtype=np.float32, ensure_2d=False, order="C")
    except ValueError as exc:
        raise DataError(f"invalid {what}: {exc}") from exc


def _check_leads(n_found: int, n_leads: Optional[int], what: str) -> None:
    if n_leads is not None and n_found != n_leads:
        raise LeadCountMismatch(f"{what} have {n_found} leads, expected {n_leads}")


def check_segments(X, n_leads: Optional[int] = None) -> np.ndarray:
    """Segments as ``(n, n_leads, 400)``."""
    X = _as_float32(X, "segments")
    if X.ndim != 3 or X.shape[2] != SEGMENT_LENGTH:
        raise ShapeMismatch(f"segments must have shape (n, n_leads, {SEGMENT_LENGTH}), got {X.shape}")
    _check_leads(X.shape[1], n_leads, "segments")
    return X


def check_features(X, n_leads: Optional[int] = None) -> np.ndarray:
    """Feature tensors as ``(n, n_leads, 2, 25)``."""
    X = _as_float32(X, "features")
    if X.ndim != 4 or X.shape[2:] != (FEATURE_CHANNELS, FEATURE_LENGTH):
        raise ShapeMismatch(
            f"features must have shape (n, n_leads, {FEATURE_CHANNELS}, {FEATURE_LENGTH}), got {X.shape}"
        )
    _check_leads(X.shape[1], n_leads, "features")
    return X


def check_pairs(X, n_leads: Optional[int] = None):
    """Pairs as ``(n, 2, n_leads, 2, 25)``; lazy :class:`PairArray` inputs pass through."""
    from .models.pairs import PairArray

    if isinstance(X, PairArray):
        _check_leads(X.n_leads, n_leads, "pair features")
        return X
    X = _as_float32(X, "pairs")
    if X.ndim != 5 or X.shape[1] != 2 or X.shape[3:] != (FEATURE_CHANNELS, FEATURE_LENGTH):
        raise ShapeMismatch(
            f"pairs must have shape (n, 2, n_leads, {FEATURE_CHANNELS}, {FEATURE_LENGTH}), got {X.shape}"
        )
    _check_leads(X.shape[2], n_leads, "pair features")
    return X


def check_binary_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ShapeMismatch(f"labels must have shape ({n},), got {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0 (impostor) or 1 (genuine)")
    return y.astype(np.float32)
