"""Records -> segment store -> feature store."""

from __future__ import annotations

import logging
from typing import Iterable, Optional

import numpy as np

from ..errors import DataError, EmptyInput, InvalidParams
from ..records import EcgRecord
from ..segmentation import segment_record
from ..signal import preprocess_record
from .store import ArrayStore

logger = logging.getLogger(__name__)

KINDS = ("template", "summary", "single")


def _records(dataset) -> Iterable[EcgRecord]:
    return dataset.records if hasattr(dataset, "records") else dataset


def _contextual(exc: DataError, record: EcgRecord) -> DataError:
    return type(exc)(f"subject {record.subject_id} session {record.session_index}: {exc}")


def _check_policy(on_error: str) -> None:
    if on_error not in ("raise", "skip"):
        raise InvalidParams(f"on_error must be 'raise' or 'skip', got {on_error!r}")


def segment_dataset(dataset, preprocess: bool = True, on_error: str = "raise") -> ArrayStore:
    """Pre-process and segment every record, in manifest order.

    Each (subject, session) gets three blocks: ``template`` ``(1, l, 400)``,
    ``summary`` ``(k, l, 400)`` and ``single`` ``(n, l, 400)``, all amplitude
    normalized. With ``on_error="skip"`` a failing record is left out and its
    contextual message is kept in ``store.errors``.
    """
    _check_policy(on_error)
    store = ArrayStore({"content": "segments"})
    for record in _records(dataset):
        try:
            rec = preprocess_record(record) if preprocess else record
            sset = segment_record(rec)
            if sset.template is None:
                raise EmptyInput("no complete heartbeat window was found")
            template, summaries, singles = sset.arrays()
        except DataError as exc:
            err = _contextual(exc, record)
            if on_error == "raise":
                raise err from exc
            logger.warning("skipping record: %s", err)
            store.errors.append(f"{type(err).__name__}: {err}")
            continue
        empty = np.zeros((0,) + template.shape[1:], dtype=np.float32)
        for kind, block in zip(KINDS, (template, summaries, singles)):
            block = empty if block is None else block
            store.add(record.subject_id, record.session_index, kind, block)
    store.meta["errors"] = list(store.errors)
    return store


def extract_feature_store(segments: ArrayStore, autoencoder) -> ArrayStore:
    """Apply a fitted :class:`~ecgx.models.ConvAutoencoder` to every block of a segment store."""
    store = ArrayStore({"content": "features", "errors": list(segments.meta.get("errors", []))})
    store.errors = list(store.meta["errors"])
    for (subject, session, kind), block in segments.items():
        store.add(subject, session, kind, autoencoder.transform(block) if len(block) else
                  np.zeros((0, block.shape[1], 2, 25), dtype=np.float32))
    return store


def cache_features(dataset, ae_bundle, out_path=None, on_error: str = "raise") -> ArrayStore:
    """Segment ``dataset``, extract features with ``ae_bundle`` and optionally save them."""
    from ..models import ConvAutoencoder

    ae = ae_bundle if isinstance(ae_bundle, ConvAutoencoder) else ConvAutoencoder.from_bundle(ae_bundle)
    store = extract_feature_store(segment_dataset(dataset, on_error=on_error), ae)
    if out_path is not None:
        store.save(out_path)
    return store


def stack_blocks(store: ArrayStore, kind: str, subjects: Optional[Iterable[str]] = None,
                 limit_per_block: Optional[int] = None, seed: int = 0) -> np.ndarray:
    """Concatenate all ``kind`` blocks (optionally of some subjects, capped per block)."""
    wanted = None if subjects is None else set(subjects)
    rng = np.random.default_rng(seed)
    parts = []
    for (subject, _, k), block in store.items():
        if k != kind or (wanted is not None and subject not in wanted):
            continue
        if limit_per_block is not None and len(block) > limit_per_block:
            block = block[np.sort(rng.choice(len(block), size=limit_per_block, replace=False))]
        parts.append(block)
    if not parts:
        raise EmptyInput(f"store has no {kind} segments for the requested subjects")
    return np.concatenate(parts)
