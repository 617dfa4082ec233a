"""Checksummed little-endian binary containers for arrays and model bundles.

Layout shared by both file kinds::

    magic        8 bytes
    version      uint32 LE
    payload      concatenated little-endian float32 blocks
    index        UTF-8 JSON (metadata + one entry per block: key, offset, shape)
    index_offset uint64 LE
    index_length uint64 LE
    digest       32 bytes, SHA-256 of everything before it

Writers stream blocks as they are added and emit the index on close.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..errors import ChecksumMismatch, DataError, VersionUnsupported

STORE_MAGIC = b"ECGXSTOR"
BUNDLE_MAGIC = b"ECGXBNDL"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<8sI")
_TAIL = struct.Struct("<QQ")
_DIGEST = 32
_DTYPE = np.dtype("<f4")


class _ContainerWriter:
    def __init__(self, path, magic: bytes, version: int = FORMAT_VERSION):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._hash = hashlib.sha256()
        self._offset = 0
        self._entries: List[dict] = []
        self._write(_HEAD.pack(magic, version))
        self._payload_start = self._offset

    def _write(self, data: bytes) -> None:
        self._fh.write(data)
        self._hash.update(data)
        self._offset += len(data)

    def add(self, key, array: np.ndarray) -> None:
        data = np.ascontiguousarray(array, dtype=_DTYPE)
        self._entries.append(
            {"key": key, "offset": self._offset - self._payload_start, "shape": list(data.shape)}
        )
        self._write(data.tobytes())

    def close(self, meta: dict) -> None:
        index = json.dumps({"meta": meta, "entries": self._entries}, sort_keys=True).encode("utf-8")
        index_offset = self._offset
        self._write(index)
        self._write(_TAIL.pack(index_offset, len(index)))
        self._fh.write(self._hash.digest())
        self._fh.close()


def _read_container(path, magic: bytes) -> Tuple[dict, List[Tuple[object, np.ndarray]]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from exc
    if len(raw) < _HEAD.size:
        raise ChecksumMismatch(f"{path}: file truncated")
    found, version = _HEAD.unpack_from(raw)
    if found != magic:
        raise ChecksumMismatch(f"{path}: bad magic {found!r}, expected {magic!r}")
    if len(raw) < _HEAD.size + _TAIL.size + _DIGEST:
        raise ChecksumMismatch(f"{path}: file truncated")
    body, digest = raw[:-_DIGEST], raw[-_DIGEST:]
    # the digest covers the version field, so check it first
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumMismatch(f"{path}: payload checksum mismatch")
    if version > FORMAT_VERSION:
        raise VersionUnsupported(f"{path}: format_version {version} > supported {FORMAT_VERSION}")
    index_offset, index_length = _TAIL.unpack_from(body, len(body) - _TAIL.size)
    index = json.loads(body[index_offset : index_offset + index_length].decode("utf-8"))
    blocks = []
    for entry in index["entries"]:
        start = _HEAD.size + entry["offset"]
        count = int(np.prod(entry["shape"], dtype=np.int64))
        array = np.frombuffer(body, dtype=_DTYPE, count=count, offset=start)
        blocks.append((entry["key"], array.reshape(entry["shape"]).astype(np.float32)))
    return index["meta"], blocks


# ---------------------------------------------------------------- array stores

StoreKey = Tuple[str, int, str]


class ArrayStore:
    """Append-only mapping ``(subject_id, session_index, kind) -> float32 array``.

    Used both for segment stores (arrays ``(n, n_leads, 400)``) and feature
    stores (arrays ``(n, n_leads, 2, 25)``). Insertion order is preserved and
    is the iteration order everywhere downstream.
    """

    def __init__(self, meta: Optional[dict] = None):
        self.meta = dict(meta or {})
        self._blocks: Dict[StoreKey, np.ndarray] = {}
        self.errors: List[str] = []

    def add(self, subject_id: str, session_index: int, kind: str, array) -> None:
        key = (str(subject_id), int(session_index), str(kind))
        if key in self._blocks:
            raise DataError(f"store entry {key} already exists (stores are append-only)")
        block = np.ascontiguousarray(array, dtype=np.float32)
        block.setflags(write=False)
        self._blocks[key] = block

    def get(self, subject_id: str, session_index: int, kind: str) -> np.ndarray:
        return self._blocks[(subject_id, int(session_index), kind)]

    def __contains__(self, key) -> bool:
        return tuple(key) in self._blocks

    def __len__(self) -> int:
        return len(self._blocks)

    def keys(self) -> List[StoreKey]:
        return list(self._blocks)

    def items(self):
        return self._blocks.items()

    def subjects(self) -> List[str]:
        seen: Dict[str, None] = {}
        for subject, _, _ in self._blocks:
            seen.setdefault(subject, None)
        return list(seen)

    def sessions(self, subject_id: str) -> List[int]:
        return sorted({k[1] for k in self._blocks if k[0] == subject_id})

    def inventory(self) -> Dict[str, Dict[int, Dict[str, int]]]:
        """Segment counts per subject, session and kind (used by the protocols)."""
        out: Dict[str, Dict[int, Dict[str, int]]] = {}
        for (subject, session, kind), block in self._blocks.items():
            out.setdefault(subject, {}).setdefault(session, {})[kind] = int(block.shape[0])
        for subject in out:
            out[subject] = dict(sorted(out[subject].items()))
        return out

    def lookup(self, ref) -> np.ndarray:
        """Array for one :class:`~ecgx.protocol.SegmentRef`."""
        return self._blocks[(ref.subject_id, ref.session_index, ref.kind)][ref.index]

    def gather(self, refs: Iterable) -> np.ndarray:
        return np.stack([self.lookup(r) for r in refs])

    @property
    def n_leads(self) -> Optional[int]:
        for block in self._blocks.values():
            return int(block.shape[1])
        return None

    def save(self, path) -> None:
        writer = _ContainerWriter(path, STORE_MAGIC)
        for key, block in self._blocks.items():
            writer.add(list(key), block)
        writer.close(self.meta)

    @classmethod
    def load(cls, path) -> "ArrayStore":
        meta, blocks = _read_container(path, STORE_MAGIC)
        store = cls(meta)
        for key, array in blocks:
            store.add(key[0], key[1], key[2], array)
        return store


# ---------------------------------------------------------------- model bundles

BUNDLE_KINDS = ("Autoencoder", "Siamese1L", "Siamese12L", "IdentHead")


@dataclass
class ModelBundle:
    """Architecture descriptor plus named float32 parameters of one network."""

    kind: str
    arch_descriptor: dict
    parameters: Dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.kind not in BUNDLE_KINDS:
            raise DataError(f"unknown bundle kind {self.kind!r}")

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.parameters):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.parameters[name], dtype=_DTYPE).tobytes())
        return h.hexdigest()


def save_bundle(bundle: ModelBundle, path) -> None:
    writer = _ContainerWriter(path, BUNDLE_MAGIC, bundle.format_version)
    for name, array in bundle.parameters.items():
        writer.add(name, array)
    writer.close(
        {
            "kind": bundle.kind,
            "arch_descriptor": bundle.arch_descriptor,
            "metadata": bundle.metadata,
        }
    )


def load_bundle(path) -> ModelBundle:
    meta, blocks = _read_container(path, BUNDLE_MAGIC)
    return ModelBundle(
        kind=meta["kind"],
        arch_descriptor=meta["arch_descriptor"],
        parameters={name: array for name, array in blocks},
        metadata=meta.get("metadata", {}),
    )
