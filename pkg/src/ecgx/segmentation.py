"""R-peak detection and single / summary / template segment construction."""

from __future__ import annotations

from typing import List, Sequence

import numpy as np
from scipy.signal import butter, filtfilt, find_peaks

from .errors import EmptyInput, LeadMissing, RateMismatch
from .records import (
    SAMPLES_AFTER_PEAK,
    SAMPLES_BEFORE_PEAK,
    TARGET_RATE,
    EcgRecord,
    Segment,
    SegmentKind,
    SegmentSet,
)
from .signal import normalize_amplitude

REFRACTORY_S = 0.2
TEMPLATE_NEAREST = 5
SUMMARY_BLOCK = 10


def detection_lead(record: EcgRecord) -> np.ndarray:
    if record.n_leads == 1:
        return record.samples[0]
    try:
        return record.samples[record.lead_labels.index("I")]
    except ValueError:
        raise LeadMissing(
            f"record {record.subject_id}/{record.session_index} has no Lead I "
            f"(leads: {list(record.lead_labels)})"
        ) from None


def pan_tompkins(x: np.ndarray, fs: float = TARGET_RATE) -> np.ndarray:
    """Offline Pan-Tompkins QRS detector returning R-peak sample indices.

    Band-pass 5-15 Hz, five-point derivative, squaring, 150 ms moving-window
    integration, then adaptive signal/noise thresholds with search-back.
    Each detection is refined to the largest sample of the band-passed
    signal within +-75 ms.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    refractory = int(round(REFRACTORY_S * fs))
    if n < 3 * refractory or not np.any(x != x[0]):
        return np.array([], dtype=np.int64)

    b, a = butter(2, [5.0, 15.0], btype="bandpass", fs=fs)
    band = filtfilt(b, a, x - x.mean())
    deriv = np.convolve(band, np.array([1.0, 2.0, 0.0, -2.0, -1.0]) * fs / 8.0, mode="same")
    width = int(round(0.150 * fs))
    mwi = np.convolve(deriv**2, np.ones(width) / width, mode="same")
    if not np.any(mwi > 0):
        return np.array([], dtype=np.int64)

    candidates, _ = find_peaks(mwi, distance=refractory)
    if candidates.size == 0:
        return np.array([], dtype=np.int64)
    heights = mwi[candidates]

    # learning phase over the first two seconds
    head = mwi[: int(2 * fs)]
    spk = head.max() / 3.0
    npk = head.mean() / 2.0
    threshold = npk + 0.25 * (spk - npk)

    accepted: List[int] = []
    rr: List[int] = []
    noise: List[int] = []
    for idx, h in zip(candidates, heights):
        if accepted and rr:
            limit = int(1.66 * np.mean(rr[-8:]))
            if idx - accepted[-1] > limit:
                # search back for the strongest skipped peak above the low threshold
                between = [c for c in noise if c - accepted[-1] > refractory and idx - c > refractory]
                if between:
                    best = max(between, key=lambda c: mwi[c])
                    if mwi[best] > 0.5 * threshold:
                        rr.append(best - accepted[-1])
                        accepted.append(best)
                        spk = 0.25 * mwi[best] + 0.75 * spk
                noise = []
        if h > threshold and (not accepted or idx - accepted[-1] > refractory):
            if accepted:
                rr.append(idx - accepted[-1])
            accepted.append(int(idx))
            spk = 0.125 * h + 0.875 * spk
        else:
            noise.append(int(idx))
            npk = 0.125 * h + 0.875 * npk
        threshold = npk + 0.25 * (spk - npk)

    half = int(round(0.075 * fs))
    peaks = []
    for idx in accepted:
        lo, hi = max(0, idx - half), min(n, idx + half + 1)
        r = lo + int(np.argmax(band[lo:hi]))
        if peaks and r - peaks[-1] < refractory:
            if band[r] > band[peaks[-1]]:
                peaks[-1] = r
            continue
        peaks.append(r)
    return np.asarray(peaks, dtype=np.int64)


def detect_r_peaks(record: EcgRecord) -> np.ndarray:
    """Detect R-peaks on Lead I (or the only lead) of a 500 Hz record."""
    if record.sampling_rate != TARGET_RATE:
        raise RateMismatch(f"r-peak detection expects {TARGET_RATE} Hz, got {record.sampling_rate}")
    return pan_tompkins(detection_lead(record), record.sampling_rate)


def extract_single_segments(record: EcgRecord, peaks: Sequence[int]) -> List[Segment]:
    """Cut a 400-sample window (160 before, 240 after) around every inner peak.

    The first and last peaks are discarded; windows that do not fit inside the
    record are skipped.
    """
    peaks = np.asarray(peaks, dtype=np.int64)
    segments = []
    for p in peaks[1:-1]:
        start, stop = p - SAMPLES_BEFORE_PEAK, p + SAMPLES_AFTER_PEAK
        if start < 0 or stop > record.n_samples:
            continue
        segments.append(
            Segment(
                kind=SegmentKind.SINGLE,
                samples=record.samples[:, start:stop].copy(),
                subject_id=record.subject_id,
                session_index=record.session_index,
                anchor_peak_index=int(p),
            )
        )
    return segments


def nearest_mean(stack: np.ndarray, k: int = TEMPLATE_NEAREST) -> np.ndarray:
    """Mean of the ``k`` rows of ``stack`` closest to the mean of all rows.

    ``stack`` has shape ``(n, n_leads, 400)``; the distance is Euclidean over
    all leads jointly and ties go to the lower index.
    """
    n = stack.shape[0]
    centre = stack.mean(axis=0)
    dist = np.sqrt(((stack - centre) ** 2).reshape(n, -1).sum(axis=1))
    chosen = stack[np.sort(np.argsort(dist, kind="stable")[: min(k, n)])]
    # averaging deviations from one member keeps identical inputs exact
    ref = chosen[0]
    return ref + (chosen - ref).mean(axis=0)


def build_template(segments: Sequence[Segment]) -> Segment:
    if len(segments) == 0:
        raise EmptyInput("cannot build a template from zero segments")
    stack = np.stack([s.samples for s in segments])
    first = segments[0]
    return Segment(
        kind=SegmentKind.TEMPLATE,
        samples=nearest_mean(stack),
        subject_id=first.subject_id,
        session_index=first.session_index,
    )


def build_summary_segments(segments: Sequence[Segment]) -> List[Segment]:
    """Reduce each complete block of ten consecutive singles to one summary."""
    summaries = []
    for start in range(0, len(segments) - SUMMARY_BLOCK + 1, SUMMARY_BLOCK):
        block = segments[start : start + SUMMARY_BLOCK]
        stack = np.stack([s.samples for s in block])
        summaries.append(
            Segment(
                kind=SegmentKind.SUMMARY,
                samples=nearest_mean(stack),
                subject_id=block[0].subject_id,
                session_index=block[0].session_index,
            )
        )
    return summaries


def segment_record(record: EcgRecord, normalize: bool = True) -> SegmentSet:
    """Run detection and build every segment kind for a pre-processed record.

    Templates and summaries are computed from the raw single segments;
    amplitude normalization is applied to each finished segment.
    """
    peaks = detect_r_peaks(record)
    singles = extract_single_segments(record, peaks)
    template = build_template(singles) if singles else None
    summaries = build_summary_segments(singles)
    if normalize:
        singles = [normalize_amplitude(s) for s in singles]
        summaries = [normalize_amplitude(s) for s in summaries]
        template = None if template is None else normalize_amplitude(template)
    return SegmentSet(record.subject_id, record.session_index, template, summaries, singles)
