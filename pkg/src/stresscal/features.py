"""HRV and EDA feature vectors over sliding windows.

HRV windows cover a fixed span of cumulative beat time (300 s by default)
and advance one beat at a time, so the number of intervals per window
varies. EDA windows cover a fixed number of samples (600 s by default) and
advance by a configurable sample step.

All standard deviations are population (``ddof=0``) statistics; skewness
and excess kurtosis are standardized central moments and are 0 for
zero-variance input.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy import signal as sp_signal
from scipy.interpolate import CubicSpline

from .dataio import FeatureTable, SignalRecording
from .errors import InsufficientDataError, ParameterError, UsageError
from .signals import (
    DEFAULT_SCR_THRESHOLD,
    FilterSpec,
    IBISeries,
    SCREventList,
    condition_eda,
    detect_r_peaks,
    detect_scr_events,
)

log = logging.getLogger(__name__)

__all__ = [
    "WindowSpec",
    "LabelInterval",
    "SubjectSession",
    "ExtractionLog",
    "HRV_FEATURES",
    "EDA_FEATURES",
    "DEFAULT_BANDS",
    "moments",
    "ibi_window_bounds",
    "sample_window_bounds",
    "sliding_windows",
    "hrv_time_features",
    "relative_rr",
    "poincare_descriptors",
    "hrv_frequency_features",
    "hrv_features",
    "eda_features",
    "extract_feature_table",
]

HRV_TIME = ["MEAN_RR", "MEDIAN_RR", "SDRR", "SKEW_RR", "KURT_RR", "RMSSD", "SDSD", "SDRR_RMSSD", "pNN25", "pNN50"]
HRV_REL = [
    "REL_RR_MEAN",
    "REL_RR_MEDIAN",
    "REL_RR_SDRR",
    "REL_RR_RMSSD",
    "REL_RR_SDSD",
    "REL_RR_SKEW",
    "REL_RR_KURT",
]
HRV_FREQ = ["VLF", "LF", "HF", "LF_HF"]
HRV_FEATURES = HRV_TIME + ["SD1", "SD2"] + HRV_REL + HRV_FREQ

EDA_FEATURES = [
    "MEAN_SC", "MAX_SC", "MIN_SC", "RANGE_SC", "KURT_SC", "SKEW_SC",
    "MEAN_D1", "STD_D1", "MEAN_D2", "STD_D2",
    "PEAK_MEAN", "PEAK_MAX", "PEAK_MIN", "PEAK_STD",
    "ONSET_MEAN", "ONSET_MAX", "ONSET_MIN", "ONSET_STD",
    "ALSC", "INSC", "APSC", "RMSC",
]  # fmt: skip

# (low, high) edges in Hz, half-open [low, high)
DEFAULT_BANDS = {"VLF": (0.0033, 0.04), "LF": (0.04, 0.15), "HF": (0.15, 0.4)}


@dataclass(frozen=True)
class WindowSpec:
    """Window length in seconds and step.

    ``step`` is ignored for IBI series (always one beat); for sampled
    signals it is the advance in samples.
    """

    length_s: float
    step: int = 1

    def __post_init__(self):
        if not self.length_s > 0:
            raise ParameterError("window length must be positive")
        if self.step < 1:
            raise ParameterError("window step must be at least one sample")


# ---------------------------------------------------------------------------
# descriptive statistics


def moments(x: np.ndarray) -> tuple[float, float, float, float]:
    """Mean, population std, skewness and excess kurtosis of ``x``."""
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    d = x - m
    sd = float(np.sqrt(np.mean(d * d)))
    if not sd > 0.0 or np.ptp(x) == 0.0:
        return m, 0.0, 0.0, 0.0
    z = d / sd
    z2 = z * z
    return m, sd, float(np.mean(z2 * z)), float(np.mean(z2 * z2)) - 3.0


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def _std(x: np.ndarray) -> float:
    return float(np.std(x)) if x.size else 0.0


# ---------------------------------------------------------------------------
# windows


def ibi_window_bounds(ibi: IBISeries, length_s: float) -> tuple[np.ndarray, np.ndarray]:
    """``(start, stop)`` index pairs of one-beat-step windows spanning ``length_s``.

    The window starting at beat ``i`` begins at the previous beat's
    occurrence time and ends at the first beat whose time reaches
    ``length_s`` later.
    """
    t = ibi.t_ms
    n = t.size
    length_ms = length_s * 1000.0
    if n == 0 or t[-1] < length_ms * (1 - 1e-12):
        raise InsufficientDataError(
            f"series of {ibi.duration_s:.3f} s is shorter than one {length_s} s window"
        )
    t_prev = t - ibi.intervals_ms
    tol = 1e-9 * length_ms
    stop = np.searchsorted(t, t_prev + length_ms - tol, side="left") + 1
    valid = stop <= n
    start = np.flatnonzero(valid)
    return start, stop[valid]


def sample_window_bounds(n_samples: int, fs: float, spec: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    width = int(round(spec.length_s * fs))
    if width < 1 or n_samples < width:
        raise InsufficientDataError(
            f"recording of {n_samples / fs:.3f} s is shorter than one {spec.length_s} s window"
        )
    start = np.arange(0, n_samples - width + 1, spec.step)
    return start, start + width


def sliding_windows(series: IBISeries | SignalRecording, spec: WindowSpec) -> Iterator[np.ndarray]:
    """Yield successive windows of an IBI series or a sampled signal."""
    if isinstance(series, IBISeries):
        start, stop = ibi_window_bounds(series, spec.length_s)
        values = series.intervals_ms
    else:
        start, stop = sample_window_bounds(series.samples.size, series.sample_rate_hz, spec)
        values = series.samples
    for a, b in zip(start, stop):
        yield values[a:b]


# ---------------------------------------------------------------------------
# HRV


def hrv_time_features(iv: np.ndarray) -> dict[str, float]:
    iv = np.asarray(iv, dtype=float)
    if iv.size < 3:
        raise InsufficientDataError("HRV time-domain features need at least 3 intervals")
    mean, sdrr, skew, kurt = moments(iv)
    diff = np.diff(iv)
    rmssd = _rms(diff)
    sdsd = _std(diff)
    absd = np.abs(diff)
    return {
        "MEAN_RR": mean,
        "MEDIAN_RR": float(np.median(iv)),
        "SDRR": sdrr,
        "SKEW_RR": skew,
        "KURT_RR": kurt,
        "RMSSD": rmssd,
        "SDSD": sdsd,
        "SDRR_RMSSD": sdrr / rmssd if rmssd > 0 else 0.0,
        "pNN25": 100.0 * float(np.count_nonzero(absd > 25.0)) / diff.size,
        "pNN50": 100.0 * float(np.count_nonzero(absd > 50.0)) / diff.size,
    }


def relative_rr(iv: np.ndarray) -> tuple[np.ndarray, dict[str, float]]:
    """Relative RR series ``2 (RR_i - RR_{i-1}) / (RR_i + RR_{i-1})`` and its statistics."""
    iv = np.asarray(iv, dtype=float)
    if iv.size < 2:
        raise InsufficientDataError("relative RR needs at least 2 intervals")
    rel = 2.0 * (iv[1:] - iv[:-1]) / (iv[1:] + iv[:-1])
    mean, sd, skew, kurt = moments(rel)
    d = np.diff(rel)
    return rel, {
        "REL_RR_MEAN": mean,
        "REL_RR_MEDIAN": float(np.median(rel)),
        "REL_RR_SDRR": sd,
        "REL_RR_RMSSD": _rms(d),
        "REL_RR_SDSD": _std(d),
        "REL_RR_SKEW": skew,
        "REL_RR_KURT": kurt,
    }


def poincare_descriptors(iv: np.ndarray) -> tuple[float, float]:
    """SD1 and SD2 from the population SDSD and SDRR."""
    iv = np.asarray(iv, dtype=float)
    if iv.size < 3:
        raise InsufficientDataError("Poincare descriptors need at least 3 intervals")
    sdrr = _std(iv)
    sdsd = _std(np.diff(iv))
    sd1 = sdsd / np.sqrt(2.0)
    rad = 2.0 * sdrr * sdrr - 0.5 * sdsd * sdsd
    if rad < 0.0:
        warnings.warn(f"negative SD2 radicand {rad:.3e} clamped to 0", RuntimeWarning, stacklevel=2)
        rad = 0.0
    return float(sd1), float(np.sqrt(rad))


def hrv_frequency_features(
    iv: np.ndarray,
    t_ms: np.ndarray | None = None,
    *,
    resample_hz: float = 4.0,
    segment_s: float = 120.0,
    bands: Mapping[str, tuple[float, float]] = DEFAULT_BANDS,
) -> dict[str, float]:
    """VLF/LF/HF band powers (ms^2) of the interval series and LF/HF.

    The intervals are cubic-spline resampled onto a uniform grid, the
    mean removed, and the PSD estimated with Welch's method (Hann window,
    50 % overlap).
    """
    iv = np.asarray(iv, dtype=float)
    t = np.cumsum(iv) if t_ms is None else np.asarray(t_ms, dtype=float)
    if iv.size < 4:
        raise InsufficientDataError("frequency features need at least 4 intervals")
    ts = t / 1000.0
    grid = np.arange(ts[0], ts[-1], 1.0 / resample_hz)
    if grid.size < 8:
        raise InsufficientDataError("window too short for spectral estimation")
    if np.ptp(iv) == 0.0:
        u = np.zeros_like(grid)
    else:
        u = CubicSpline(ts, iv)(grid)
        u = u - u.mean()
    nper = min(grid.size, int(round(segment_s * resample_hz)))
    freqs, psd = sp_signal.welch(
        u, fs=resample_hz, window="hann", nperseg=nper, noverlap=nper // 2, detrend="constant", scaling="density"
    )
    df = freqs[1] - freqs[0]
    out = {}
    for name, (lo, hi) in bands.items():
        mask = (freqs >= lo) & (freqs < hi)
        out[name] = float(psd[mask].sum() * df)
    hf = out.get("HF", 0.0)
    out["LF_HF"] = out.get("LF", 0.0) / hf if hf > 0 else 0.0
    return out


def hrv_features(
    iv: np.ndarray, t_ms: np.ndarray | None = None, bands: Mapping[str, tuple[float, float]] = DEFAULT_BANDS
) -> dict[str, float]:
    """All HRV features of one window, keyed by name."""
    feats = hrv_time_features(iv)
    feats["SD1"], feats["SD2"] = poincare_descriptors(iv)
    feats.update(relative_rr(iv)[1])
    feats.update(hrv_frequency_features(iv, t_ms, bands=bands))
    return feats


# ---------------------------------------------------------------------------
# EDA


def _event_stats(prefix: str, v: np.ndarray) -> dict[str, float]:
    if v.size == 0:
        return {f"{prefix}_MEAN": 0.0, f"{prefix}_MAX": 0.0, f"{prefix}_MIN": 0.0, f"{prefix}_STD": 0.0}
    return {
        f"{prefix}_MEAN": float(v.mean()),
        f"{prefix}_MAX": float(v.max()),
        f"{prefix}_MIN": float(v.min()),
        f"{prefix}_STD": _std(v),
    }


def eda_features(r: np.ndarray, events: SCREventList | None = None) -> dict[str, float]:
    """EDA features of one window of the conditioned conductance ``r``.

    ``events`` should already be restricted to the window. Peak and onset
    statistics are conductance amplitudes, 0 when there are no events.
    """
    r = np.asarray(r, dtype=float)
    if r.size == 0:
        raise InsufficientDataError("empty EDA window")
    mean, _, skew, kurt = moments(r)
    d1 = np.diff(r)
    d2 = np.diff(r, 2)
    apsc = float(np.mean(r * r))
    if events is None:
        events = SCREventList.empty()
    feats = {
        "MEAN_SC": mean,
        "MAX_SC": float(r.max()),
        "MIN_SC": float(r.min()),
        "RANGE_SC": float(r.max() - r.min()),
        "KURT_SC": kurt,
        "SKEW_SC": skew,
        "MEAN_D1": float(d1.mean()) if d1.size else 0.0,
        "STD_D1": _std(d1),
        "MEAN_D2": float(d2.mean()) if d2.size else 0.0,
        "STD_D2": _std(d2),
    }
    feats.update(_event_stats("PEAK", events.peak_sc))
    feats.update(_event_stats("ONSET", events.onset_sc))
    feats["ALSC"] = float(np.sqrt(1.0 + d1 * d1).sum())
    feats["INSC"] = float(np.abs(r).sum())
    feats["APSC"] = apsc
    feats["RMSC"] = float(np.sqrt(apsc))
    return feats


# ---------------------------------------------------------------------------
# table extraction


@dataclass(frozen=True)
class LabelInterval:
    """Experimental condition active on ``[start_s, end_s]`` of a recording."""

    start_s: float
    end_s: float
    label: str
    target: float

    def contains(self, a: float, b: float, tol: float = 1e-9) -> bool:
        return self.start_s - tol <= a and b <= self.end_s + tol


@dataclass
class SubjectSession:
    """One subject's recordings and condition timeline.

    For HRV extraction either ``ibi`` or ``ecg`` must be present; for EDA
    extraction ``eda``. Recording times are measured from 0 at the first
    sample (or the start of the first interval).
    """

    subject_id: str
    labels: list[LabelInterval]
    ibi: IBISeries | None = None
    ecg: SignalRecording | None = None
    eda: SignalRecording | None = None


@dataclass
class ExtractionLog:
    windows: int = 0
    rows: int = 0
    dropped_straddling: int = 0
    dropped_unlabeled: int = 0
    zero_denominator: dict = field(default_factory=dict)
    short_recordings: list = field(default_factory=list)
    rejected_intervals: int = 0

    def merge(self, other: "ExtractionLog") -> None:
        self.windows += other.windows
        self.rows += other.rows
        self.dropped_straddling += other.dropped_straddling
        self.dropped_unlabeled += other.dropped_unlabeled
        self.rejected_intervals += other.rejected_intervals
        self.short_recordings += other.short_recordings
        for k, v in other.zero_denominator.items():
            self.zero_denominator[k] = self.zero_denominator.get(k, 0) + v

    def to_dict(self) -> dict:
        return {
            "windows": self.windows,
            "rows": self.rows,
            "dropped_straddling": self.dropped_straddling,
            "dropped_unlabeled": self.dropped_unlabeled,
            "zero_denominator": dict(sorted(self.zero_denominator.items())),
            "short_recordings": list(self.short_recordings),
            "rejected_intervals": self.rejected_intervals,
        }


def _assign(labels: Sequence[LabelInterval], a: float, b: float, log_: ExtractionLog) -> LabelInterval | None:
    """Condition active at window end ``b``; None when the window straddles a boundary."""
    active = [iv for iv in labels if iv.start_s - 1e-9 <= b <= iv.end_s + 1e-9]
    if not active:
        log_.dropped_unlabeled += 1
        return None
    for iv in active:
        if iv.contains(a, b):
            return iv
    log_.dropped_straddling += 1
    return None


def _hrv_rows(session: SubjectSession, window: WindowSpec, bands) -> tuple[list, ExtractionLog]:
    log_ = ExtractionLog()
    ibi = session.ibi
    if ibi is None:
        if session.ecg is None:
            raise UsageError(f"subject {session.subject_id}: no IBI series or ECG recording")
        ibi = detect_r_peaks(session.ecg)
        log_.rejected_intervals += ibi.n_rejected
    try:
        start, stop = ibi_window_bounds(ibi, window.length_s)
    except InsufficientDataError:
        warnings.warn(f"subject {session.subject_id}: IBI series shorter than one window; no rows", stacklevel=3)
        log_.short_recordings.append(session.subject_id)
        return [], log_
    rows = []
    t_prev = ibi.t_ms - ibi.intervals_ms
    for a, b in zip(start, stop):
        log_.windows += 1
        ws, we = t_prev[a] / 1000.0, ibi.t_ms[b - 1] / 1000.0
        cond = _assign(session.labels, ws, we, log_)
        if cond is None:
            continue
        feats = hrv_features(ibi.intervals_ms[a:b], ibi.t_ms[a:b], bands)
        for k in ("SDRR_RMSSD", "LF_HF"):
            if feats[k] == 0.0:
                log_.zero_denominator[k] = log_.zero_denominator.get(k, 0) + 1
        rows.append((ws, cond, [feats[f] for f in HRV_FEATURES]))
    log_.rows = len(rows)
    return rows, log_


def _eda_rows(session: SubjectSession, window: WindowSpec, filter_spec: FilterSpec, scr_threshold: float):
    log_ = ExtractionLog()
    if session.eda is None:
        raise UsageError(f"subject {session.subject_id}: no EDA recording")
    sig = condition_eda(session.eda, filter_spec)
    fs = sig.sample_rate_hz
    try:
        start, stop = sample_window_bounds(sig.samples.size, fs, window)
    except InsufficientDataError:
        warnings.warn(f"subject {session.subject_id}: EDA recording shorter than one window; no rows", stacklevel=3)
        log_.short_recordings.append(session.subject_id)
        return [], log_
    events = detect_scr_events(sig, scr_threshold)
    rows = []
    for a, b in zip(start, stop):
        log_.windows += 1
        ws, we = a / fs, b / fs
        cond = _assign(session.labels, ws, we, log_)
        if cond is None:
            continue
        feats = eda_features(sig.samples[a:b], events.restrict(a, b))
        rows.append((ws, cond, [feats[f] for f in EDA_FEATURES]))
    log_.rows = len(rows)
    return rows, log_


def extract_feature_table(
    sessions: Sequence[SubjectSession],
    kind: str = "hrv",
    window: WindowSpec | None = None,
    *,
    bands: Mapping[str, tuple[float, float]] = DEFAULT_BANDS,
    filter_spec: FilterSpec = FilterSpec(),
    scr_threshold: float = DEFAULT_SCR_THRESHOLD,
    label_set: Sequence[str] = (),
    n_jobs: int = 1,
) -> tuple[FeatureTable, ExtractionLog]:
    """Build a feature table with one row per window.

    Each row carries the condition (and its self-report target) active at
    the window end; windows that straddle a condition boundary or fall
    outside every labelled interval are dropped. Rows are ordered by
    subject id, then window start.
    """
    kind = kind.lower()
    if kind == "hrv":
        window = window or WindowSpec(300.0)
        work = lambda s: _hrv_rows(s, window, bands)  # noqa: E731
        names = HRV_FEATURES
    elif kind == "eda":
        window = window or WindowSpec(600.0)
        work = lambda s: _eda_rows(s, window, filter_spec, scr_threshold)  # noqa: E731
        names = EDA_FEATURES
    else:
        raise UsageError(f"unknown feature kind {kind!r}; expected 'hrv' or 'eda'")

    ordered = sorted(sessions, key=lambda s: s.subject_id)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(work, ordered))
    else:
        results = [work(s) for s in ordered]

    total = ExtractionLog()
    subj, labs, targets, X = [], [], [], []
    for session, (rows, lg) in zip(ordered, results):
        total.merge(lg)
        for _, cond, vec in sorted(rows, key=lambda r: r[0]):
            subj.append(session.subject_id)
            labs.append(cond.label)
            targets.append(cond.target)
            X.append(vec)
    if not label_set:
        seen = []
        for s in ordered:
            for iv in s.labels:
                if iv.label not in seen:
                    seen.append(iv.label)
        label_set = sorted(seen)
    table = FeatureTable(
        subject_ids=np.asarray(subj, dtype=object),
        labels=np.asarray(labs, dtype=object),
        targets=np.asarray(targets, dtype=float),
        X=np.asarray(X, dtype=float).reshape(len(X), len(names)),
        feature_names=list(names),
        label_set=tuple(label_set),
        meta={"kind": kind, "extraction": total.to_dict()},
    )
    log.info("extracted %d rows from %d windows (%s)", total.rows, total.windows, kind)
    return table, total
