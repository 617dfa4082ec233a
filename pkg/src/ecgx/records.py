"""Plain data containers shared across the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DataError

SEGMENT_LENGTH = 400
SAMPLES_BEFORE_PEAK = 160
SAMPLES_AFTER_PEAK = 240
TARGET_RATE = 500


@dataclass(frozen=True)
class EcgRecord:
    """One acquisition session of one subject.

    ``samples`` has shape ``(n_leads, n_samples)`` and is expressed in mV.
    """

    subject_id: str
    session_index: int
    sampling_rate: int
    lead_labels: tuple
    samples: np.ndarray
    session_day_offset: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2:
            raise DataError(f"record samples must be 2-D, got shape {samples.shape}")
        labels = tuple(self.lead_labels)
        if len(labels) < 1 or len(labels) != samples.shape[0]:
            raise DataError(
                f"{len(labels)} lead labels for {samples.shape[0]} sample rows"
            )
        if not np.all(np.isfinite(samples)):
            raise DataError(
                f"record {self.subject_id}/{self.session_index} contains NaN or Inf"
            )
        if self.sampling_rate <= 0:
            raise DataError(f"sampling rate must be positive, got {self.sampling_rate}")
        if self.session_index < 1:
            raise DataError(f"session_index must be >= 1, got {self.session_index}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "lead_labels", labels)

    @property
    def n_leads(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def with_samples(self, samples: np.ndarray, sampling_rate: Optional[int] = None):
        return replace(
            self,
            samples=samples,
            sampling_rate=self.sampling_rate if sampling_rate is None else sampling_rate,
        )


class SegmentKind(str, enum.Enum):
    SINGLE = "single"
    SUMMARY = "summary"
    TEMPLATE = "template"


@dataclass(frozen=True)
class Segment:
    """A heartbeat-shaped window of ``(n_leads, 400)`` samples."""

    kind: SegmentKind
    samples: np.ndarray
    subject_id: str = ""
    session_index: int = 0
    anchor_peak_index: Optional[int] = None
    normalized: bool = False

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[1] != SEGMENT_LENGTH:
            raise DataError(
                f"segment must have {SEGMENT_LENGTH} samples per lead, got shape {samples.shape}"
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "kind", SegmentKind(self.kind))

    @property
    def n_leads(self) -> int:
        return self.samples.shape[0]


@dataclass
class SegmentSet:
    """Everything the pre-processing stage yields for one record."""

    subject_id: str
    session_index: int
    template: Optional[Segment]
    summaries: list = field(default_factory=list)
    singles: list = field(default_factory=list)

    def arrays(self):
        """Return ``(template, summaries, singles)`` as stacked arrays."""

        def stack(segments: Sequence[Segment]):
            if not segments:
                return None
            return np.stack([s.samples for s in segments])

        template = None if self.template is None else self.template.samples[np.newaxis]
        return template, stack(self.summaries), stack(self.singles)
