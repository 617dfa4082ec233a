"""Synthetic multi-subject ECG: five Gaussian waves (P, Q, R, S, T) per beat."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import InvalidParams
from ..records import TARGET_RATE, EcgRecord

WAVE_NAMES = ("P", "Q", "R", "S", "T")
TWELVE_LEADS = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")


@dataclass(frozen=True)
class SyntheticSubjectParams:
    """Morphology and rhythm of one synthetic subject.

    ``waves`` holds one ``(amplitude_mV, centre_offset_s, width_s)`` triple per
    wave, offsets relative to the R-peak. ``lead_gains`` scales each wave per
    lead, shape ``(n_leads, 5)``; the first lead is Lead I.
    """

    waves: Tuple[Tuple[float, float, float], ...] = (
        (0.15, -0.20, 0.025),
        (-0.12, -0.035, 0.010),
        (1.20, 0.0, 0.012),
        (-0.30, 0.035, 0.012),
        (0.35, 0.28, 0.050),
    )
    heart_rate: float = 70.0
    hr_jitter: float = 0.03
    noise_std: float = 0.01
    lead_gains: Tuple[Tuple[float, ...], ...] = ((1.0, 1.0, 1.0, 1.0, 1.0),)

    def validate(self) -> None:
        if len(self.waves) != 5 or any(len(w) != 3 for w in self.waves):
            raise InvalidParams("waves must be five (amplitude, centre, width) triples")
        amps = [w[0] for w in self.waves]
        if not (amps[2] > abs(amps[1]) and amps[2] > abs(amps[3])):
            raise InvalidParams(f"R amplitude {amps[2]} must exceed |Q| and |S|")
        if any(w[2] <= 0 for w in self.waves):
            raise InvalidParams("wave widths must be positive")
        if not 40 <= self.heart_rate <= 180:
            raise InvalidParams(f"heart rate {self.heart_rate} outside [40, 180] bpm")
        if self.hr_jitter < 0 or self.noise_std < 0:
            raise InvalidParams("jitter and noise must be non-negative")
        gains = np.asarray(self.lead_gains, dtype=float)
        if gains.ndim != 2 or gains.shape[1] != 5 or gains.shape[0] < 1:
            raise InvalidParams(f"lead_gains must have shape (n_leads, 5), got {gains.shape}")

    @property
    def n_leads(self) -> int:
        return len(self.lead_gains)

    @classmethod
    def random(cls, rng: np.random.Generator, n_leads: int = 1) -> "SyntheticSubjectParams":
        waves = (
            (rng.uniform(0.08, 0.30), -rng.uniform(0.15, 0.24), rng.uniform(0.015, 0.040)),
            (-rng.uniform(0.02, 0.25), -rng.uniform(0.025, 0.045), rng.uniform(0.006, 0.014)),
            (rng.uniform(0.8, 1.8), 0.0, rng.uniform(0.008, 0.016)),
            (-rng.uniform(0.05, 0.60), rng.uniform(0.025, 0.050), rng.uniform(0.006, 0.016)),
            (rng.uniform(0.10, 0.60), rng.uniform(0.20, 0.34), rng.uniform(0.035, 0.075)),
        )
        gains = [(1.0,) * 5]
        for _ in range(n_leads - 1):
            gains.append(tuple(rng.uniform(0.3, 1.5, size=5)))
        return cls(
            waves=tuple(tuple(float(v) for v in w) for w in waves),
            heart_rate=float(rng.uniform(55.0, 95.0)),
            hr_jitter=0.03,
            noise_std=0.01,
            lead_gains=tuple(tuple(float(g) for g in row) for row in gains),
        )


def beat_times(params: SyntheticSubjectParams, duration_s: float, rng: np.random.Generator) -> np.ndarray:
    rr_mean = 60.0 / params.heart_rate
    times = []
    t = rr_mean / 2
    while t < duration_s:
        times.append(t)
        rr = rr_mean * (1.0 + params.hr_jitter * rng.standard_normal())
        t += max(rr, 0.5 * rr_mean)
    return np.asarray(times)


def synthesize_ecg(
    params: SyntheticSubjectParams,
    duration_s: float,
    fs: int = TARGET_RATE,
    seed: int = 0,
    subject_id: str = "synthetic",
    session_index: int = 1,
    day_offset: int = 0,
    lead_labels: Optional[Tuple[str, ...]] = None,
):
    """Render ``duration_s`` seconds of ECG; returns ``(record, r_peak_indices)``."""
    params.validate()
    rr_mean = 60.0 / params.heart_rate
    if duration_s < 2 * rr_mean:
        raise InvalidParams(f"duration {duration_s}s holds fewer than two beats")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    beats = beat_times(params, duration_s, rng)
    gains = np.asarray(params.lead_gains, dtype=float)
    out = np.zeros((gains.shape[0], n))
    for tb in beats:
        lo = max(0, int((tb - 0.45) * fs))
        hi = min(n, int((tb + 0.65) * fs) + 1)
        tt = t[lo:hi] - tb
        shapes = np.stack(
            [a * np.exp(-0.5 * ((tt - c) / w) ** 2) for a, c, w in params.waves]
        )
        out[:, lo:hi] += gains @ shapes
    if params.noise_std > 0:
        out += params.noise_std * rng.standard_normal(out.shape)
    peaks = np.round(beats * fs).astype(np.int64)
    peaks = peaks[peaks < n]
    if lead_labels is None:
        lead_labels = ("I",) if gains.shape[0] == 1 else TWELVE_LEADS[: gains.shape[0]]
    record = EcgRecord(
        subject_id=subject_id,
        session_index=session_index,
        sampling_rate=fs,
        lead_labels=tuple(lead_labels),
        samples=out,
        session_day_offset=day_offset,
    )
    return record, peaks


@dataclass
class SyntheticCohort:
    records: List[EcgRecord]
    params: dict = field(default_factory=dict)
    peaks: dict = field(default_factory=dict)


def synthesize_cohort(
    n_subjects: int,
    n_sessions: int = 2,
    duration_s: float = 60.0,
    seed: int = 0,
    n_leads: int = 1,
    fs: int = TARGET_RATE,
    session_gap_days: int = 30,
) -> SyntheticCohort:
    """Generate ``n_subjects`` x ``n_sessions`` records, fully determined by ``seed``."""
    if n_subjects < 1 or n_sessions < 1:
        raise InvalidParams("need at least one subject and one session")
    if not 1 <= n_leads <= 12:
        raise InvalidParams(f"n_leads must be in [1, 12], got {n_leads}")
    root = np.random.SeedSequence(seed)
    cohort = SyntheticCohort(records=[])
    width = max(3, len(str(n_subjects)))
    for s, child in enumerate(root.spawn(n_subjects)):
        subject_seq, *session_seqs = child.spawn(n_sessions + 1)
        params = SyntheticSubjectParams.random(np.random.default_rng(subject_seq), n_leads)
        subject_id = f"S{s + 1:0{width}d}"
        cohort.params[subject_id] = params
        for k, seq in enumerate(session_seqs, start=1):
            session_seed = int(seq.generate_state(1, dtype=np.uint64)[0])
            record, peaks = synthesize_ecg(
                params,
                duration_s,
                fs=fs,
                seed=session_seed,
                subject_id=subject_id,
                session_index=k,
                day_offset=(k - 1) * session_gap_days,
            )
            cohort.records.append(record)
            cohort.peaks[(subject_id, k)] = peaks
    return cohort
