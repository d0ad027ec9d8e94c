import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from pulseforge import signalcore as sc
from pulseforge.errors import InvalidArgument
from pulseforge.signalcore import BandLimits, Spectrum, VideoCube, Waveform

finite = st.floats(-1e3, 1e3, allow_nan=False)


def tone(f, n, fs=30.0, amp=1.0, phase=0.0):
    return amp * np.sin(2 * np.pi * f * np.arange(n) / fs + phase)


# ------------------------------------------------------------------ types


def test_waveform_is_read_only_copy():
    src = np.arange(5.0)
    w = Waveform(src, 30)
    src[0] = 99
    assert w.samples[0] == 0
    with pytest.raises(ValueError):
        w.samples[1] = 3


@pytest.mark.parametrize("bad", [np.array([1.0]), np.zeros((2, 2)), np.array([0.0, np.nan])])
def test_waveform_rejects_bad_samples(bad):
    with pytest.raises(InvalidArgument):
        Waveform(bad, 30)


def test_band_limits_validation():
    with pytest.raises(InvalidArgument):
        BandLimits(3.0, 0.66)
    with pytest.raises(InvalidArgument):
        BandLimits(0.66, 3.0).check(5.0)


# -------------------------------------------------------------------- FFT


def test_zero_signal_has_zero_power():
    s = sc.fft_psd(Waveform(np.zeros(50), 30), 64)
    assert np.all(s.powers == 0)


def test_bin_aligned_tone_single_bin():
    n, k = 64, 5
    x = np.cos(2 * np.pi * k * np.arange(n) / n)
    p = sc.fft_psd(Waveform(x, 30), n).powers
    others = np.delete(p, k)
    assert others.max() <= 1e-9 * p[k]


def test_random_64_matches_dft_oracle():
    x = np.random.default_rng(0).normal(size=64)
    p = sc.fft_psd(Waveform(x, 30), 64).powers
    ref = oracles.dft_power(x, 64)
    assert oracles.rel_err(p, ref) <= 1e-9


@pytest.mark.parametrize("n", range(2, 129))
def test_psd_matches_dft_all_lengths(n):
    x = np.random.default_rng(n).normal(size=n)
    nfft = sc.next_pow2(n)
    p = sc.fft_psd(Waveform(x, 30), nfft).powers
    assert oracles.rel_err(p, oracles.dft_power(x, nfft)) <= 1e-9


@given(arrays(np.float64, st.integers(2, 128), elements=finite))
def test_parseval(x):
    nfft = sc.next_pow2(x.size)
    pad = np.zeros(nfft)
    pad[: x.size] = x
    X = sc.fft(pad)
    lhs = float(np.sum(x**2))
    rhs = float(np.sum(np.abs(X) ** 2)) / nfft
    assert math.isclose(lhs, rhs, rel_tol=1e-9, abs_tol=1e-9)


def test_fft_roundtrip_and_numpy_agreement():
    x = np.random.default_rng(1).normal(size=(3, 256)) + 1j * np.random.default_rng(2).normal(size=(3, 256))
    np.testing.assert_allclose(sc.fft(x), np.fft.fft(x, axis=-1), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(sc.ifft(sc.fft(x)), x, atol=1e-12)


def test_fft_rejects_non_pow2():
    with pytest.raises(InvalidArgument):
        sc.fft(np.zeros(12))


def test_fft_psd_errors():
    w = Waveform(np.ones(100), 30)
    with pytest.raises(InvalidArgument):
        sc.fft_psd(w, 64)
    with pytest.raises(InvalidArgument):
        sc.fft_psd(w, 200)


def test_default_nfft():
    assert sc.default_nfft(10) == 1024
    assert sc.default_nfft(300) == 2048
    assert sc.default_nfft(1024) == 4096


def test_power_spectrum_vjp_matches_fd():
    rng = np.random.default_rng(3)
    x = rng.normal(size=20)
    w = rng.normal(size=33)

    def f(v):
        return float(sc.power_spectrum(v, 64)[0] @ w)

    _, X = sc.power_spectrum(x, 64)
    g = sc.power_spectrum_vjp(X, w, 20)
    assert oracles.rel_err(g, oracles.fd_grad(f, x)) <= 1e-6


# -------------------------------------------------------------- HR readout


def _bin_aligned(f_hz, fs=30.0, nfft=1024):
    # integer cycles over nfft samples at a bin centre
    return np.sin(2 * np.pi * f_hz * np.arange(nfft) / fs)


def test_hr_from_psd_72():
    fs, nfft = 30.0, 1000  # 1.2 Hz is bin 40 on a 1000-point grid
    x = np.sin(2 * np.pi * 1.2 * np.arange(nfft) / fs)
    P = np.abs(np.fft.rfft(x)) ** 2
    assert sc.hr_from_psd(Spectrum(fs / nfft, P, nfft)) == pytest.approx(72.0, abs=1e-9)


def test_hr_two_tones_and_tie():
    p = np.zeros(101)
    p[10], p[20] = 4.0, 1.0  # bins at 1.0 and 2.0 Hz with 0.1 Hz spacing
    assert sc.hr_from_psd(Spectrum(0.1, p, 200)) == pytest.approx(60.0)
    p[20] = 4.0
    assert sc.hr_from_psd(Spectrum(0.1, p, 200)) == pytest.approx(60.0)


def test_hr_band_too_narrow():
    with pytest.raises(InvalidArgument):
        sc.hr_from_psd(Spectrum(5.0, np.ones(4), 6))


@given(st.floats(1e-6, 1e6), st.integers(0, 2**31 - 1))
@settings(max_examples=50)
def test_hr_invariant_to_power_scaling(k, seed):
    p = np.random.default_rng(seed).random(513)
    a = sc.hr_from_psd(Spectrum(30 / 1024, p, 1024))
    b = sc.hr_from_psd(Spectrum(30 / 1024, p * k, 1024))
    assert a == b


# --------------------------------------------------------------- filtering


def test_dc_rejected():
    y = sc.bandpass_butter1(Waveform(np.ones(600), 30))
    assert np.max(np.abs(y.samples[100:-100])) < 0.01


def _steady_amp(f, fs=30.0, n=1800):
    y = sc.filtfilt_butter1(tone(f, n, fs), BandLimits(), fs)
    return np.max(np.abs(y[n // 3 : -n // 3]))


def test_passband_tone_keeps_amplitude():
    # zero-phase filtering squares the single-pass magnitude
    expected = float(sc.butter1_response(BandLimits(), 30.0, 1.5)) ** 2
    assert expected >= 0.7
    assert _steady_amp(1.5) >= 0.7
    assert _steady_amp(1.5) == pytest.approx(expected, rel=0.02)


def test_stopband_tone_matches_analytic_response():
    expected = float(sc.butter1_response(BandLimits(), 30.0, 8.0)) ** 2
    assert _steady_amp(8.0) == pytest.approx(expected, rel=0.05)


def test_analytic_response_matches_transfer_function_oracle():
    # H(s) = B s / (s^2 + B s + w0^2) with pre-warped edges, evaluated through the bilinear map
    fs, band = 30.0, BandLimits()
    wl = 2 * fs * math.tan(math.pi * band.low / fs)
    wh = 2 * fs * math.tan(math.pi * band.high / fs)
    for f in (0.3, 0.66, 1.2, 3.0, 7.0):
        z = np.exp(1j * 2 * np.pi * f / fs)
        s = 2 * fs * (z - 1) / (z + 1)
        H = (wh - wl) * s / (s * s + (wh - wl) * s + wl * wh)
        assert float(sc.butter1_response(band, fs, f)) == pytest.approx(abs(H), rel=1e-12)
    # edges sit at -3 dB
    for f in (band.low, band.high):
        assert float(sc.butter1_response(band, fs, f)) == pytest.approx(1 / math.sqrt(2), rel=1e-9)


def test_filtfilt_matches_scipy():
    signal = pytest.importorskip("scipy.signal")
    x = np.random.default_rng(4).normal(size=(2, 300))
    b, a = signal.butter(1, [0.66, 3.0], btype="bandpass", fs=30.0)
    ref = signal.filtfilt(b, a, x, axis=-1)
    np.testing.assert_allclose(sc.filtfilt_butter1(x, BandLimits(), 30.0), ref, rtol=1e-9, atol=1e-12)


@given(finite, finite, st.integers(0, 1000))
@settings(max_examples=30)
def test_filter_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 200))
    f = lambda v: sc.filtfilt_butter1(v, BandLimits(), 30.0)
    lhs = f(a * x + b * y)
    rhs = a * f(x) + b * f(y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


# ------------------------------------------------------------------- misc


def test_resample_identity():
    w = Waveform(np.random.default_rng(0).normal(size=50), 30)
    out = sc.resample_linear(w, 30)
    assert np.array_equal(out.samples, w.samples) and out.fs == 30


def test_resample_ramp_exact():
    w = Waveform(3.0 + 0.5 * np.arange(61), 30)
    out = sc.resample_linear(w, 15)
    t = np.arange(len(out)) / 15
    np.testing.assert_allclose(out.samples, 3.0 + 0.5 * 30 * t, atol=1e-12)


def test_resample_sinusoid_error_bound():
    f, fs = 1.3, 30.0
    w = Waveform(np.sin(2 * np.pi * f * np.arange(300) / fs), fs)
    out = sc.resample_linear(w, 25)
    t = np.arange(len(out)) / 25
    dev = np.max(np.abs(out.samples - np.sin(2 * np.pi * f * t)))
    # linear interpolation error <= h^2/8 max|x''| with h = 1/fs
    assert dev <= (2 * np.pi * f / fs) ** 2 / 8 + 1e-12


def test_frame_diff_examples():
    clip = VideoCube(np.array([0.0, 1.0, 3.0]).reshape(3, 1, 1, 1))
    raw = sc.frame_diff(clip, normalize=False).frames.ravel()
    np.testing.assert_array_equal(raw, [1, 2, 2])
    const = VideoCube(np.full((4, 2, 2, 3), 7.0))
    assert np.all(sc.frame_diff(const).frames == 0)
    with pytest.raises(InvalidArgument):
        sc.frame_diff(VideoCube(np.zeros((1, 2, 2, 3))))


def test_frame_diff_random_and_cumsum():
    v = np.random.default_rng(5).normal(size=(8, 4, 4, 3))
    d = sc.frame_diff(VideoCube(v), normalize=False).frames
    np.testing.assert_allclose(d[:-1], v[1:] - v[:-1], atol=0)
    np.testing.assert_array_equal(d[-1], d[-2])
    rec = v[0] + np.concatenate([np.zeros((1, 4, 4, 3)), np.cumsum(d[:-1], axis=0)])
    np.testing.assert_allclose(rec, v, atol=1e-12)
    z = sc.frame_diff(VideoCube(v)).frames.reshape(-1, 3)
    np.testing.assert_allclose(z.mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(z.std(0), 1, atol=1e-12)


def test_standardize_examples():
    z = sc.standardize(Waveform(np.array([1.0, 2.0, 3.0]), 30)).samples
    assert abs(z.mean()) < 1e-15 and abs(z.var() - 1) < 1e-12
    np.testing.assert_allclose(sc.standardize(Waveform(z, 30)).samples, z, atol=1e-12)
    assert np.all(sc.standardize(Waveform(np.full(6, 4.0), 30)).samples == 0)


def test_standardize_vjp_matches_fd():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(2, 12))
    w = rng.normal(size=(2, 12))
    z = sc.standardize_array(x)
    g = sc.standardize_vjp(z, x, w)
    ref = oracles.fd_grad(lambda v: float(np.sum(sc.standardize_array(v) * w)), x, 1e-6)
    assert oracles.rel_err(g, ref) <= 1e-6


def test_waveform_csv_roundtrip(tmp_path):
    w = Waveform(np.random.default_rng(7).normal(size=40), 29.97)
    sc.write_waveform_csv(w, tmp_path / "w.csv")
    text = (tmp_path / "w.csv").read_text().splitlines()
    assert text[0] == "# fs=29.97" and text[1] == "t,value"
    back = sc.read_waveform_csv(tmp_path / "w.csv")
    assert back.fs == w.fs and np.array_equal(back.samples, w.samples)
