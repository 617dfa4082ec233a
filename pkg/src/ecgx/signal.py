"""Resampling, FIR band-pass + mains notch, and per-lead amplitude normalization."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.signal import fftconvolve, firwin
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import EmptySignal, FlatLead, InvalidSpec, RateMismatch, UnsupportedRate
from .records import TARGET_RATE, EcgRecord, Segment

NORMALIZED_AMPLITUDE = 2.0  # mV, peak-to-peak
MIN_AMPLITUDE = 1e-6


@dataclass(frozen=True)
class FilterSpec:
    passband_low: float = 0.7
    passband_high: float = 90.0
    notch_center: float = 50.0
    notch_halfwidth: float = 2.0
    bandpass_taps: int = 501
    notch_taps: int = 301
    window: str = "hamming"

    def validate(self, fs: float) -> None:
        if not 0 < self.passband_low < self.passband_high < fs / 2:
            raise InvalidSpec(
                f"need 0 < {self.passband_low} < {self.passband_high} < {fs / 2}"
            )
        low, high = self.notch_center - self.notch_halfwidth, self.notch_center + self.notch_halfwidth
        if self.notch_halfwidth <= 0 or low <= 0 or high >= fs / 2:
            raise InvalidSpec(f"notch band [{low}, {high}] Hz is not inside (0, {fs / 2})")
        for name in ("bandpass_taps", "notch_taps"):
            taps = getattr(self, name)
            if taps < 3 or taps % 2 == 0:
                raise InvalidSpec(f"{name} must be an odd integer >= 3, got {taps}")


class FilterBank(NamedTuple):
    bandpass: np.ndarray
    bandstop: np.ndarray
    fs: float

    @property
    def delay(self) -> int:
        """Total group delay of the cascade, in samples."""
        return (len(self.bandpass) - 1) // 2 + (len(self.bandstop) - 1) // 2

    def cascade(self) -> np.ndarray:
        return np.convolve(self.bandpass, self.bandstop)


def resample(signal, src_rate: int, dst_rate: int = TARGET_RATE) -> np.ndarray:
    """Decimate ``signal`` from ``src_rate`` to ``dst_rate`` by an integer factor.

    A Hamming-window low-pass with cutoff ``dst_rate / 2`` (unit DC gain,
    delay compensated) is applied before keeping every k-th sample.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("cannot resample an empty signal")
    if src_rate <= 0 or dst_rate <= 0:
        raise UnsupportedRate(f"rates must be positive, got {src_rate} -> {dst_rate}")
    if src_rate == dst_rate:
        return x
    ratio = Fraction(src_rate) / Fraction(dst_rate)
    if src_rate < dst_rate or ratio.denominator != 1:
        raise UnsupportedRate(
            f"only integer decimation is supported, got {src_rate} Hz -> {dst_rate} Hz"
        )
    factor = ratio.numerator
    n_out = (len(x) * dst_rate) // src_rate
    taps = firwin(50 * factor + 1, dst_rate / 2, window="hamming", fs=src_rate)
    delay = (len(taps) - 1) // 2
    smoothed = fftconvolve(x, taps)[delay : delay + len(x)]
    return smoothed[::factor][:n_out]


def design_filters(spec: FilterSpec = FilterSpec(), fs: float = TARGET_RATE) -> FilterBank:
    """Design the band-pass and band-stop linear-phase FIR filters.

    The band-pass is the difference of two unit-DC windowed-sinc low-passes,
    so its DC gain is zero. The band-stop is a unit impulse minus a band-pass
    normalised to unit gain at the notch centre, so it has an exact zero there.
    """
    if fs != TARGET_RATE:
        raise RateMismatch(f"filters are designed for {TARGET_RATE} Hz, got {fs}")
    spec.validate(fs)
    high = firwin(spec.bandpass_taps, spec.passband_high, window=spec.window, fs=fs)
    low = firwin(spec.bandpass_taps, spec.passband_low, window=spec.window, fs=fs)
    bandpass = high - low

    band = [spec.notch_center - spec.notch_halfwidth, spec.notch_center + spec.notch_halfwidth]
    bandstop = -firwin(spec.notch_taps, band, pass_zero=False, window=spec.window, fs=fs)
    bandstop[(spec.notch_taps - 1) // 2] += 1.0

    # exact symmetry; firwin is symmetric up to rounding
    bandpass = 0.5 * (bandpass + bandpass[::-1])
    bandstop = 0.5 * (bandstop + bandstop[::-1])
    return FilterBank(bandpass, bandstop, fs)


def frequency_response(taps, freqs, fs: float) -> np.ndarray:
    """Magnitude of the DTFT of ``taps`` at ``freqs`` (Hz)."""
    taps = np.asarray(taps, dtype=np.float64)
    n = np.arange(len(taps))
    omega = 2 * np.pi * np.atleast_1d(np.asarray(freqs, dtype=np.float64)) / fs
    return np.abs(np.exp(-1j * np.outer(omega, n)) @ taps)


def filter_leads(samples: np.ndarray, filters: FilterBank) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = samples.shape[1]
    d1 = (len(filters.bandpass) - 1) // 2
    d2 = (len(filters.bandstop) - 1) // 2
    out = np.empty_like(samples)
    for i, lead in enumerate(samples):
        # zero-padded convolution, trimmed so output sample t lines up with input sample t
        y = fftconvolve(lead, filters.bandpass)[d1 : d1 + n]
        out[i] = fftconvolve(y, filters.bandstop)[d2 : d2 + n]
    return out


def apply_filters(record: EcgRecord, filters: FilterBank | None = None) -> EcgRecord:
    if record.sampling_rate != TARGET_RATE:
        raise RateMismatch(
            f"record {record.subject_id}/{record.session_index} is at "
            f"{record.sampling_rate} Hz, expected {TARGET_RATE} Hz"
        )
    if filters is None:
        filters = default_filters()
    return record.with_samples(filter_leads(record.samples, filters))


def normalize_amplitude(segment: Segment) -> Segment:
    """Scale every lead so that its peak-to-peak amplitude is 2 mV."""
    samples = segment.samples
    span = samples.max(axis=1) - samples.min(axis=1)
    flat = np.flatnonzero(span < MIN_AMPLITUDE)
    if flat.size:
        raise FlatLead(
            f"lead(s) {flat.tolist()} of {segment.kind.value} segment "
            f"{segment.subject_id}/{segment.session_index} have range < {MIN_AMPLITUDE} mV"
        )
    scaled = samples * (NORMALIZED_AMPLITUDE / span)[:, np.newaxis]
    return Segment(
        kind=segment.kind,
        samples=scaled,
        subject_id=segment.subject_id,
        session_index=segment.session_index,
        anchor_peak_index=segment.anchor_peak_index,
        normalized=True,
    )


def resample_record(record: EcgRecord, dst_rate: int = TARGET_RATE) -> EcgRecord:
    if record.sampling_rate == dst_rate:
        return record
    rows = [resample(lead, record.sampling_rate, dst_rate) for lead in record.samples]
    return record.with_samples(np.stack(rows), sampling_rate=dst_rate)


@lru_cache(maxsize=1)
def default_filters() -> FilterBank:
    return design_filters(FilterSpec(), TARGET_RATE)


def preprocess_record(record: EcgRecord, filters: FilterBank | None = None) -> EcgRecord:
    """Resample to 500 Hz and apply the band-pass + notch cascade."""
    return apply_filters(resample_record(record), filters)


class EcgPreprocessor(TransformerMixin, BaseEstimator):
    """Resample and filter a list of :class:`EcgRecord`.

    Stateless; ``fit`` only designs the filters so they are built once.
    """

    def __init__(
        self,
        passband_low=0.7,
        passband_high=90.0,
        notch_center=50.0,
        notch_halfwidth=2.0,
        bandpass_taps=501,
        notch_taps=301,
    ):
        self.passband_low = passband_low
        self.passband_high = passband_high
        self.notch_center = notch_center
        self.notch_halfwidth = notch_halfwidth
        self.bandpass_taps = bandpass_taps
        self.notch_taps = notch_taps

    def fit(self, X=None, y=None):
        spec = FilterSpec(
            self.passband_low,
            self.passband_high,
            self.notch_center,
            self.notch_halfwidth,
            self.bandpass_taps,
            self.notch_taps,
        )
        self.filters_ = design_filters(spec, TARGET_RATE)
        return self

    def transform(self, X):
        check_is_fitted(self, "filters_")
        return [preprocess_record(record, self.filters_) for record in X]
