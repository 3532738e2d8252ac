"""Conditioning of raw ECG and EDA signals.

ECG goes through a simplified Pan-Tompkins detector (5-15 Hz band-pass,
squaring, moving-window integration, adaptive threshold) to produce an
inter-beat-interval series. EDA is low-passed with a zero-phase
Butterworth filter, smoothed with a centred moving average, and scanned for
SCR onset/peak pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy import signal as sp_signal

from .dataio import SignalRecording
from .errors import InsufficientSignalError, ParameterError, UsageError

__all__ = [
    "IBISeries",
    "SCREventList",
    "FilterSpec",
    "butter_sos",
    "sos_magnitude",
    "sosfilt_zero_phase",
    "butterworth_lowpass",
    "moving_average",
    "condition_eda",
    "detect_r_peaks",
    "detect_scr_events",
    "IBI_MIN_MS",
    "IBI_MAX_MS",
    "DEFAULT_SCR_THRESHOLD",
]

IBI_MIN_MS = 300.0
IBI_MAX_MS = 2000.0
DEFAULT_SCR_THRESHOLD = 0.01  # uS/s


@dataclass(frozen=True)
class IBISeries:
    """Inter-beat intervals in ms with cumulative occurrence times."""

    intervals_ms: np.ndarray
    t_ms: np.ndarray = None
    n_rejected: int = 0

    def __post_init__(self):
        iv = np.ascontiguousarray(self.intervals_ms, dtype=float).reshape(-1)
        if iv.size and not (np.isfinite(iv).all() and (iv > 0).all()):
            raise ParameterError("inter-beat intervals must be finite and positive")
        object.__setattr__(self, "intervals_ms", iv)
        t = np.cumsum(iv) if self.t_ms is None else np.ascontiguousarray(self.t_ms, dtype=float)
        if t.shape != iv.shape:
            raise ParameterError("t_ms and intervals_ms differ in length")
        if t.size > 1 and not (np.diff(t) > 0).all():
            raise ParameterError("t_ms must be strictly increasing")
        object.__setattr__(self, "t_ms", t)

    def __len__(self):
        return self.intervals_ms.size

    @property
    def duration_s(self) -> float:
        return float(self.intervals_ms.sum()) / 1000.0


@dataclass(frozen=True)
class SCREventList:
    """Paired SCR onsets and peaks (sample index, time in s, conductance)."""

    onset_index: np.ndarray
    onset_time_s: np.ndarray
    onset_sc: np.ndarray
    peak_index: np.ndarray
    peak_time_s: np.ndarray
    peak_sc: np.ndarray

    def __len__(self):
        return self.onset_index.size

    @property
    def onsets(self) -> list[tuple[int, float, float]]:
        return list(zip(self.onset_index.tolist(), self.onset_time_s.tolist(), self.onset_sc.tolist()))

    @property
    def peaks(self) -> list[tuple[int, float, float]]:
        return list(zip(self.peak_index.tolist(), self.peak_time_s.tolist(), self.peak_sc.tolist()))

    def restrict(self, start: int, stop: int) -> "SCREventList":
        """Events whose onset and peak both fall in samples ``[start, stop)``."""
        keep = (self.onset_index >= start) & (self.peak_index < stop)
        return SCREventList(*(a[keep] for a in self._arrays()))

    def _arrays(self):
        return (self.onset_index, self.onset_time_s, self.onset_sc, self.peak_index, self.peak_time_s, self.peak_sc)

    @classmethod
    def empty(cls) -> "SCREventList":
        i = np.zeros(0, dtype=np.int64)
        f = np.zeros(0)
        return cls(i, f, f, i.copy(), f.copy(), f.copy())


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float = 4.0
    order: int = 4
    smoothing_window_s: float = 1.0

    def __post_init__(self):
        if not self.cutoff_hz > 0:
            raise ParameterError("cutoff_hz must be positive")
        if self.order < 2 or self.order % 2:
            raise ParameterError("filter order must be a positive even integer")
        if not self.smoothing_window_s > 0:
            raise ParameterError("smoothing_window_s must be positive")


# ---------------------------------------------------------------------------
# Butterworth design


def butter_sos(order: int, cutoff_hz: float, fs: float, btype: str = "low") -> np.ndarray:
    """Digital Butterworth filter as second-order sections.

    Each analog pole pair ``s^2 + 2 sin(phi_k) wc s + wc^2`` is mapped
    through the bilinear transform with ``wc`` pre-warped so the -3 dB
    point lands exactly on ``cutoff_hz``. Rows are ``[b0, b1, b2, 1, a1, a2]``.
    """
    if order < 2 or order % 2:
        raise ParameterError(f"order must be a positive even integer, got {order}")
    nyq = fs / 2.0
    if not 0 < cutoff_hz < nyq:
        raise ParameterError(f"cutoff {cutoff_hz} Hz must lie in (0, Nyquist={nyq} Hz)")
    if btype not in ("low", "high"):
        raise UsageError(f"btype must be 'low' or 'high', got {btype!r}")

    w = math.tan(math.pi * cutoff_hz / fs)  # pre-warped cutoff, in units of 2*fs
    w2 = w * w
    sos = np.empty((order // 2, 6))
    for k in range(order // 2):
        damp = 2.0 * math.sin(math.pi * (2 * k + 1) / (2 * order))
        a0 = 1.0 + damp * w + w2
        a1 = 2.0 * (w2 - 1.0)
        a2 = 1.0 - damp * w + w2
        if btype == "low":
            b = (w2, 2.0 * w2, w2)
        else:
            b = (1.0, -2.0, 1.0)
        sos[k] = (b[0] / a0, b[1] / a0, b[2] / a0, 1.0, a1 / a0, a2 / a0)
    return sos


def sos_magnitude(sos: np.ndarray, freqs_hz: np.ndarray, fs: float) -> np.ndarray:
    """|H(e^{jw})| of a cascade evaluated at the given frequencies."""
    z = np.exp(-1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float) / fs)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z + b2 * z * z) / (a0 + a1 * z + a2 * z * z)
    return np.abs(h)


def sosfilt_zero_phase(sos: np.ndarray, x: np.ndarray, padlen: int) -> np.ndarray:
    """Forward-backward filtering with odd reflection padding and steady-state initial conditions."""
    x = np.asarray(x, dtype=float)
    n = x.size
    padlen = min(padlen, n - 1)
    if padlen > 0:
        left = 2 * x[0] - x[padlen:0:-1]
        right = 2 * x[-1] - x[-2 : -padlen - 2 : -1]
        ext = np.concatenate([left, x, right])
    else:
        ext = x
    zi = sp_signal.sosfilt_zi(sos)
    y, _ = sp_signal.sosfilt(sos, ext, zi=zi * ext[0])
    y = y[::-1]
    y, _ = sp_signal.sosfilt(sos, y, zi=zi * y[0])
    y = y[::-1]
    if padlen > 0:
        y = y[padlen:-padlen]
    return np.ascontiguousarray(y)


def butterworth_lowpass(x: SignalRecording, spec: FilterSpec = FilterSpec(), zero_phase: bool = True) -> SignalRecording:
    """Low-pass ``x`` with a Butterworth filter of ``spec.order`` at ``spec.cutoff_hz``.

    By default the filter runs forward and backward (zero phase, squared
    magnitude response). ``zero_phase=False`` gives the single causal pass.
    """
    sos = butter_sos(spec.order, spec.cutoff_hz, x.sample_rate_hz, "low")
    if zero_phase:
        y = sosfilt_zero_phase(sos, x.samples, 3 * spec.order)
    else:
        y = sp_signal.sosfilt(sos, x.samples)
    return x.replace_samples(y)


def moving_average(x: SignalRecording, window_s: float) -> SignalRecording:
    """Centred moving average; edge samples average over the truncated window."""
    w = int(round(window_s * x.sample_rate_hz))
    if w < 1:
        raise ParameterError(f"window of {window_s} s is shorter than one sample")
    return x.replace_samples(_centred_mean(x.samples, w))


def _centred_mean(v: np.ndarray, w: int) -> np.ndarray:
    if w == 1:
        return v.copy()
    n = v.size
    c = np.concatenate([[0.0], np.cumsum(v)])
    i = np.arange(n)
    lo = np.clip(i - (w - 1) // 2, 0, n)
    hi = np.clip(i + w // 2 + 1, 0, n)
    return (c[hi] - c[lo]) / (hi - lo)


def condition_eda(eda: SignalRecording, spec: FilterSpec = FilterSpec()) -> SignalRecording:
    """Butterworth low-pass followed by moving-average smoothing."""
    if eda.kind != "EDA":
        raise UsageError(f"expected an EDA recording, got {eda.kind}")
    if spec.cutoff_hz >= eda.sample_rate_hz / 2:
        # 4 Hz exports cannot be low-passed at 4 Hz; the signal is already band-limited
        return moving_average(eda, spec.smoothing_window_s)
    return moving_average(butterworth_lowpass(eda, spec), spec.smoothing_window_s)


# ---------------------------------------------------------------------------
# ECG


def detect_r_peaks(
    ecg: SignalRecording,
    *,
    band_hz: tuple[float, float] = (5.0, 15.0),
    integration_s: float = 0.150,
    threshold_window_s: float = 2.0,
    threshold_ratio: float = 0.5,
    refractory_s: float = 0.25,
    min_ms: float = IBI_MIN_MS,
    max_ms: float = IBI_MAX_MS,
) -> IBISeries:
    """Detect R peaks and return the inter-beat-interval series.

    Intervals outside ``[min_ms, max_ms]`` are dropped; the count is kept
    in ``IBISeries.n_rejected``.
    """
    if ecg.kind != "ECG":
        raise UsageError(f"expected an ECG recording, got {ecg.kind}")
    fs = ecg.sample_rate_hz
    if band_hz[1] >= fs / 2:
        raise ParameterError(f"ECG sampled at {fs} Hz is too slow for a {band_hz[1]} Hz band edge")

    x = ecg.samples - np.median(ecg.samples)
    sos = np.vstack([butter_sos(2, band_hz[0], fs, "high"), butter_sos(2, band_hz[1], fs, "low")])
    bp = sosfilt_zero_phase(sos, x, 12)
    energy = _centred_mean(bp * bp, max(1, int(round(integration_s * fs))))
    if not energy.max() > 0:
        raise InsufficientSignalError("ECG has no detectable beats (flat signal)")

    running_max = ndimage.maximum_filter1d(energy, size=max(1, int(round(threshold_window_s * fs))), mode="nearest")
    threshold = threshold_ratio * running_max
    candidates, _ = sp_signal.find_peaks(energy, distance=max(1, int(round(refractory_s * fs))))
    candidates = candidates[energy[candidates] > threshold[candidates]]

    half = max(1, int(round(integration_s * fs / 2)))
    peaks = []
    for c in candidates:
        lo, hi = max(0, c - half), min(x.size, c + half + 1)
        peaks.append(lo + int(np.argmax(bp[lo:hi])))
    peaks = np.unique(np.asarray(peaks, dtype=np.int64))
    if peaks.size < 2:
        raise InsufficientSignalError(f"only {peaks.size} R peak(s) detected; need at least 2")

    intervals = np.diff(peaks) * (1000.0 / fs)
    ok = (intervals >= min_ms) & (intervals <= max_ms)
    if not ok.any():
        raise InsufficientSignalError("no physiologically plausible inter-beat intervals")
    return IBISeries(intervals[ok], n_rejected=int((~ok).sum()))


# ---------------------------------------------------------------------------
# EDA


def detect_scr_events(eda: SignalRecording, threshold: float = DEFAULT_SCR_THRESHOLD) -> SCREventList:
    """Find SCR onset/peak pairs in a conditioned EDA signal.

    An onset is a sample where the slope (uS/s) rises above ``threshold``
    after being at or below it; its peak is the next local maximum. An
    onset without a following maximum is discarded.
    """
    r = eda.samples
    fs = eda.sample_rate_hz
    if r.size < 3:
        return SCREventList.empty()
    slope = np.diff(r) * fs  # slope[i] is the rise from sample i to i+1
    above = slope > threshold
    crossings = np.flatnonzero(above[1:] & ~above[:-1]) + 1
    falling = np.flatnonzero(slope <= 0)

    onsets, peaks = [], []
    last_peak = -1
    for i in crossings:
        if i <= last_peak:
            continue
        k = np.searchsorted(falling, i)
        if k == falling.size:
            break
        j = int(falling[k])
        onsets.append(int(i))
        peaks.append(j)
        last_peak = j
    if not onsets:
        return SCREventList.empty()
    on = np.asarray(onsets, dtype=np.int64)
    pk = np.asarray(peaks, dtype=np.int64)
    return SCREventList(on, on / fs, r[on].copy(), pk, pk / fs, r[pk].copy())
