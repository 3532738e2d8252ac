import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import signal as sp_signal

from stresscal.dataio import SignalRecording
from stresscal.errors import InsufficientSignalError, ParameterError
from stresscal.signals import (
    FilterSpec,
    IBISeries,
    butter_sos,
    butterworth_lowpass,
    condition_eda,
    detect_r_peaks,
    detect_scr_events,
    moving_average,
    sos_magnitude,
)


def ecg(samples, fs=250.0):
    return SignalRecording("ECG", fs, np.asarray(samples, dtype=float))


def eda(samples, fs=4.0):
    return SignalRecording("EDA", fs, np.asarray(samples, dtype=float))


def qrs_train(beat_times_s, fs=250.0, duration_s=None, noise=0.0, seed=0):
    """Narrow Gaussian spikes at the given times, a crude QRS stand-in."""
    duration_s = duration_s or beat_times_s[-1] + 1.0
    t = np.arange(int(duration_s * fs)) / fs
    x = np.zeros_like(t)
    for b in beat_times_s:
        x += np.exp(-0.5 * ((t - b) / 0.01) ** 2)
    if noise:
        x += noise * np.random.default_rng(seed).standard_normal(t.size)
    return ecg(x, fs)


# --- Butterworth design -------------------------------------------------


@pytest.mark.parametrize("order", [2, 4, 6, 8])
@pytest.mark.parametrize("btype", ["low", "high"])
@pytest.mark.parametrize("fc,fs", [(4.0, 32.0), (0.7, 100.0), (15.0, 250.0)])
def test_butter_sos_matches_scipy_design(order, btype, fc, fs):
    ours = butter_sos(order, fc, fs, btype)
    ref = sp_signal.butter(order, fc, btype=btype, fs=fs, output="sos")
    f = np.linspace(0, fs / 2 * 0.999, 257)
    _, h = sp_signal.sosfreqz(ref, worN=f, fs=fs)
    np.testing.assert_allclose(sos_magnitude(ours, f, fs), np.abs(h), atol=1e-9)


@pytest.mark.parametrize("order", [2, 4, 6])
def test_digital_response_matches_analog_at_cutoff(order):
    fs, fc = 1000.0, 4.0  # high rate: bilinear warping is negligible
    gain = sos_magnitude(butter_sos(order, fc, fs), np.array([fc, 10 * fc]), fs)
    analog = (1 + np.array([1.0, 10.0]) ** (2 * order)) ** -0.5
    assert gain[0] == pytest.approx(analog[0], rel=1e-6)
    # bilinear warping shifts the stopband slightly at 10x cutoff
    assert gain[1] == pytest.approx(analog[1], rel=0.05)


def test_cutoff_at_nyquist_rejected():
    with pytest.raises(ParameterError):
        butter_sos(4, 2.0, 4.0)
    with pytest.raises(ParameterError):
        butterworth_lowpass(eda(np.ones(100)), FilterSpec(cutoff_hz=4.0))


def test_filter_spec_validation():
    with pytest.raises(ParameterError):
        FilterSpec(order=3)
    with pytest.raises(ParameterError):
        FilterSpec(cutoff_hz=0.0)


# --- Butterworth filtering ------------------------------------------------


def test_constant_signal_unchanged():
    x = eda(np.full(4000, 3.7), fs=32.0)
    y = butterworth_lowpass(x, FilterSpec(4.0, 4))
    np.testing.assert_allclose(y.samples, 3.7, atol=1e-9)


def _steady_gain(freq, fs, spec, zero_phase):
    t = np.arange(int(60 * fs)) / fs
    x = eda(np.sin(2 * np.pi * freq * t), fs)
    y = butterworth_lowpass(x, spec, zero_phase=zero_phase).samples
    mid = y[y.size // 4 : 3 * y.size // 4]
    return np.sqrt(2 * np.mean(mid**2))


def test_gain_at_cutoff():
    spec, fs = FilterSpec(4.0, 4), 256.0
    assert _steady_gain(4.0, fs, spec, zero_phase=False) == pytest.approx(2**-0.5, abs=0.02)
    assert _steady_gain(4.0, fs, spec, zero_phase=True) == pytest.approx(0.5, abs=0.02)


def test_stopband_at_ten_times_cutoff():
    assert _steady_gain(40.0, 256.0, FilterSpec(4.0, 4), zero_phase=False) < 1e-4


def test_zero_phase_has_no_lag():
    fs = 128.0
    t = np.arange(int(30 * fs)) / fs
    x = np.sin(2 * np.pi * 1.0 * t)
    y = butterworth_lowpass(eda(x, fs), FilterSpec(4.0, 4)).samples
    mid = slice(x.size // 4, 3 * x.size // 4)
    lag = np.argmax(np.correlate(y[mid], x[mid], "full")) - (x[mid].size - 1)
    assert lag == 0


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=300))
def test_filtering_preserves_length_and_rate(values):
    x = eda(values, fs=32.0)
    y = butterworth_lowpass(x, FilterSpec(4.0, 4))
    assert y.samples.shape == x.samples.shape and y.sample_rate_hz == x.sample_rate_hz
    z = moving_average(x, 0.5)
    assert z.samples.shape == x.samples.shape


def test_dc_gain_long_constant():
    y = butterworth_lowpass(eda(np.full(20000, -2.0), 100.0), FilterSpec(1.0, 6))
    np.testing.assert_allclose(y.samples, -2.0, atol=1e-6)


# --- moving average -------------------------------------------------------


def test_moving_average_hand_example():
    y = moving_average(eda([0, 0, 3, 0, 0], fs=1.0), 3.0)
    np.testing.assert_allclose(y.samples, [0, 1, 1, 1, 0])


def test_moving_average_identity_and_constant():
    x = eda([1.0, 5.0, -2.0, 7.0], fs=1.0)
    np.testing.assert_array_equal(moving_average(x, 1.0).samples, x.samples)
    np.testing.assert_allclose(moving_average(eda(np.full(50, 2.5)), 2.0).samples, 2.5)


def test_moving_average_window_shorter_than_sample():
    with pytest.raises(ParameterError):
        moving_average(eda([1.0, 2.0], fs=1.0), 0.2)


def test_condition_eda_at_low_rate_only_smooths():
    x = eda(np.random.default_rng(0).random(100), fs=4.0)
    np.testing.assert_array_equal(condition_eda(x).samples, moving_average(x, 1.0).samples)


# --- R peaks --------------------------------------------------------------


def test_r_peaks_periodic_train():
    ibi = detect_r_peaks(qrs_train(np.arange(1.0, 30.0, 1.0)))
    np.testing.assert_allclose(ibi.intervals_ms, 1000.0)
    assert ibi.n_rejected == 0


def test_r_peaks_alternating_gaps():
    beats = np.cumsum([1.0] + [0.8, 1.2] * 12)
    ibi = detect_r_peaks(qrs_train(beats))
    np.testing.assert_allclose(ibi.intervals_ms, [800.0, 1200.0] * 12)


def test_r_peaks_robust_to_noise_and_baseline():
    rec = qrs_train(np.arange(0.5, 60.0, 0.75), noise=0.05, seed=3)
    t = np.arange(rec.samples.size) / rec.sample_rate_hz
    rec = ecg(rec.samples + 0.5 * np.sin(2 * np.pi * 0.2 * t))
    ibi = detect_r_peaks(rec)
    np.testing.assert_allclose(ibi.intervals_ms, 750.0, atol=8.0)


def test_r_peaks_implausible_intervals_excluded():
    beats = [1.0, 2.0, 3.0, 6.0, 7.0, 8.0]  # the 3 s gap is out of range
    ibi = detect_r_peaks(qrs_train(beats))
    np.testing.assert_allclose(ibi.intervals_ms, 1000.0)
    assert ibi.n_rejected == 1


def test_r_peaks_flat_signal():
    with pytest.raises(InsufficientSignalError):
        detect_r_peaks(ecg(np.zeros(2500)))


@given(st.lists(st.floats(0.35, 1.9), min_size=2, max_size=12), st.integers(0, 100))
def test_r_peak_output_is_valid_ibi_series(gaps, seed):
    beats = np.cumsum([0.5] + gaps)
    try:
        ibi = detect_r_peaks(qrs_train(beats, noise=0.02, seed=seed))
    except InsufficientSignalError:
        return
    assert (ibi.intervals_ms >= 300).all() and (ibi.intervals_ms <= 2000).all()
    assert (np.diff(ibi.t_ms) > 0).all()
    assert ibi.t_ms.size == ibi.intervals_ms.size


def test_ibi_series_validation():
    s = IBISeries([800.0, 900.0, 1000.0])
    np.testing.assert_array_equal(s.t_ms, [800.0, 1700.0, 2700.0])
    with pytest.raises(ParameterError):
        IBISeries([800.0, -1.0])


# --- SCR events -----------------------------------------------------------


def bump(n_flat=20, rise=10, fall=10, slope=0.1, fs=4.0):
    up = np.arange(1, rise + 1) * slope / fs
    down = up[-1] - np.arange(1, fall + 1) * slope / fs
    return np.concatenate([np.zeros(n_flat), up, down, np.full(n_flat, down[-1])])


def test_scr_monotone_decreasing_is_empty():
    assert len(detect_scr_events(eda(np.linspace(5, 1, 200)))) == 0


def test_scr_single_triangular_bump():
    x = bump()
    ev = detect_scr_events(eda(x))
    assert len(ev) == 1
    assert ev.peak_index[0] == int(np.argmax(x))
    assert ev.onset_index[0] == 19


def test_scr_two_bumps_in_order():
    x = np.concatenate([bump(), bump()])
    ev = detect_scr_events(eda(x))
    assert len(ev) == 2
    assert ev.onset_index[0] < ev.peak_index[0] < ev.onset_index[1] < ev.peak_index[1]


def test_scr_trailing_onset_dropped():
    x = np.concatenate([np.zeros(10), np.arange(1, 10) * 0.05])
    assert len(detect_scr_events(eda(x))) == 0


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=200))
def test_scr_events_interleave(steps):
    r = np.cumsum(steps)
    ev = detect_scr_events(eda(r))
    order = np.column_stack([ev.onset_index, ev.peak_index]).ravel()
    assert (np.diff(order) > 0).all()
    assert (ev.peak_sc >= ev.onset_sc).all()
