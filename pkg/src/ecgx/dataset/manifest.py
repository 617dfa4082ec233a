"""Dataset manifest (JSON) and delimited record files."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, List, Sequence

import numpy as np

from ..errors import LeadMismatch, ManifestInvalid, RecordUnreadable
from ..records import EcgRecord

MANIFEST_VERSION = 1
RECORDING_MODES = ("OnThePerson", "OffThePerson")


@dataclass
class SessionEntry:
    session_index: int
    day_offset: int
    record_path: str


@dataclass
class SubjectEntry:
    subject_id: str
    sessions: List[SessionEntry] = field(default_factory=list)


@dataclass
class DatasetManifest:
    name: str
    sampling_rate: int
    lead_labels: List[str]
    subjects: List[SubjectEntry] = field(default_factory=list)
    recording_mode: str = "OnThePerson"
    format_version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "name": self.name,
            "sampling_rate": self.sampling_rate,
            "lead_labels": list(self.lead_labels),
            "recording_mode": self.recording_mode,
            "subjects": [asdict(s) for s in self.subjects],
        }

    @classmethod
    def from_dict(cls, data: dict, source: str = "<dict>") -> "DatasetManifest":
        try:
            version = int(data.get("format_version", MANIFEST_VERSION))
            if version > MANIFEST_VERSION:
                raise ManifestInvalid(f"{source}: manifest format_version {version} is newer than supported")
            subjects = [
                SubjectEntry(
                    subject_id=str(s["subject_id"]),
                    sessions=[
                        SessionEntry(int(e["session_index"]), int(e["day_offset"]), str(e["record_path"]))
                        for e in s["sessions"]
                    ],
                )
                for s in data["subjects"]
            ]
            manifest = cls(
                name=str(data["name"]),
                sampling_rate=int(data["sampling_rate"]),
                lead_labels=[str(x) for x in data["lead_labels"]],
                subjects=subjects,
                recording_mode=str(data.get("recording_mode", "OnThePerson")),
                format_version=version,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ManifestInvalid):
                raise
            raise ManifestInvalid(f"{source}: malformed manifest ({exc!r})") from exc
        manifest.validate(source)
        return manifest

    def validate(self, source: str = "<manifest>") -> None:
        if self.sampling_rate <= 0:
            raise ManifestInvalid(f"{source}: sampling_rate must be positive")
        if not self.lead_labels:
            raise ManifestInvalid(f"{source}: lead_labels is empty")
        if self.recording_mode not in RECORDING_MODES:
            raise ManifestInvalid(f"{source}: recording_mode must be one of {RECORDING_MODES}")
        seen = set()
        for subject in self.subjects:
            if subject.subject_id in seen:
                raise ManifestInvalid(f"{source}: duplicate subject {subject.subject_id}")
            seen.add(subject.subject_id)
            indices = [s.session_index for s in subject.sessions]
            days = [s.day_offset for s in subject.sessions]
            if not indices:
                raise ManifestInvalid(f"{source}: subject {subject.subject_id} has no sessions")
            if indices != sorted(set(indices)) or indices[0] < 1:
                raise ManifestInvalid(
                    f"{source}: session indices of {subject.subject_id} must be unique, ascending and >= 1"
                )
            if days != sorted(days):
                raise ManifestInvalid(f"{source}: day offsets of {subject.subject_id} must be non-decreasing")

    def entries(self) -> Iterator[tuple]:
        for subject in self.subjects:
            for session in subject.sessions:
                yield subject.subject_id, session


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestInvalid(f"{path}: cannot read manifest ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ManifestInvalid(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ManifestInvalid(f"{path}: manifest must be a JSON object")
    return DatasetManifest.from_dict(data, str(path))


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")


def read_record_table(path, expected_leads: Sequence[str]) -> np.ndarray:
    """Read one record file: header row of lead labels, one column per lead, mV."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh))
            values = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, StopIteration) as exc:
        raise RecordUnreadable(f"{path}: cannot read record ({exc})") from exc
    except ValueError as exc:
        raise RecordUnreadable(f"{path}: non-numeric content ({exc})") from exc
    header = [h.strip() for h in header]
    if len(header) != len(expected_leads) or values.shape[1] != len(expected_leads):
        raise LeadMismatch(
            f"{path}: {values.shape[1]} columns, manifest declares {len(expected_leads)} leads"
        )
    if header != list(expected_leads):
        raise LeadMismatch(f"{path}: header {header} does not match manifest leads {list(expected_leads)}")
    if not np.all(np.isfinite(values)):
        raise RecordUnreadable(f"{path}: contains NaN or Inf")
    return values.T.copy()


def write_record_table(path, samples: np.ndarray, lead_labels: Sequence[str]) -> None:
    samples = np.atleast_2d(samples)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(lead_labels) + "\n")
        np.savetxt(fh, samples.T, fmt="%.6f", delimiter=",")


class Dataset:
    """Records of one manifest, iterated in manifest order."""

    def __init__(self, manifest: DatasetManifest, records: List[EcgRecord], root: Path | None = None):
        self.manifest = manifest
        self.records = records
        self.root = root

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    @property
    def subject_ids(self) -> List[str]:
        return [s.subject_id for s in self.manifest.subjects]

    def by_subject(self) -> dict:
        out: dict = {}
        for r in self.records:
            out.setdefault(r.subject_id, []).append(r)
        return out


def load_dataset(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    root = manifest_path.parent
    records = []
    for subject_id, session in manifest.entries():
        path = root / session.record_path
        samples = read_record_table(path, manifest.lead_labels)
        records.append(
            EcgRecord(
                subject_id=subject_id,
                session_index=session.session_index,
                sampling_rate=manifest.sampling_rate,
                lead_labels=tuple(manifest.lead_labels),
                samples=samples,
                session_day_offset=session.day_offset,
            )
        )
    return Dataset(manifest, records, root)


def write_dataset(records: Sequence[EcgRecord], out_dir, name: str = "dataset",
                  recording_mode: str = "OnThePerson") -> Path:
    """Write records as delimited tables plus ``manifest.json``; returns the manifest path."""
    if not records:
        raise ManifestInvalid("no records to write")
    out_dir = Path(out_dir)
    (out_dir / "records").mkdir(parents=True, exist_ok=True)
    first = records[0]
    subjects: dict = {}
    for r in records:
        if r.lead_labels != first.lead_labels or r.sampling_rate != first.sampling_rate:
            raise ManifestInvalid("all records of one dataset must share leads and sampling rate")
        rel = os.path.join("records", f"{r.subject_id}_s{r.session_index}.csv")
        write_record_table(out_dir / rel, r.samples, r.lead_labels)
        subjects.setdefault(r.subject_id, SubjectEntry(r.subject_id)).sessions.append(
            SessionEntry(r.session_index, r.session_day_offset, rel.replace(os.sep, "/"))
        )
    for entry in subjects.values():
        entry.sessions.sort(key=lambda s: s.session_index)
    manifest = DatasetManifest(
        name=name,
        sampling_rate=first.sampling_rate,
        lead_labels=list(first.lead_labels),
        subjects=list(subjects.values()),
        recording_mode=recording_mode,
    )
    manifest.validate()
    path = out_dir / "manifest.json"
    write_manifest(manifest, path)
    return path
