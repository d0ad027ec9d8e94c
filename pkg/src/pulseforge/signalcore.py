"""Signal numerics: radix-2 FFT, one-sided PSD, Butterworth bandpass, HR readout.

Everything here is a pure function of its inputs. Arrays handed out inside
``Waveform``/``Spectrum`` are read-only copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pulseforge.errors import InvalidArgument

HR_BAND_HZ = (0.66, 3.0)


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        x = _frozen(self.samples)
        if x.ndim != 1 or x.size < 2:
            raise InvalidArgument(f"waveform needs a 1-D array of length >= 2, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidArgument("waveform contains non-finite samples")
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise InvalidArgument(f"sampling rate must be positive, got {self.fs}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return (self.samples.size - 1) / self.fs


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided power spectrum; bin ``i`` sits at ``i * bin_width`` Hz."""

    bin_width: float
    powers: np.ndarray
    n_fft: int

    def __post_init__(self):
        p = _frozen(self.powers)
        if p.ndim != 1 or not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidArgument("spectrum powers must be a finite, non-negative 1-D array")
        object.__setattr__(self, "powers", p)

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.powers.size) * self.bin_width


@dataclass(frozen=True)
class BandLimits:
    low: float = HR_BAND_HZ[0]
    high: float = HR_BAND_HZ[1]

    def __post_init__(self):
        if not (0 < self.low < self.high):
            raise InvalidArgument(f"band needs 0 < low < high, got [{self.low}, {self.high}]")

    def check(self, fs: float) -> None:
        if not self.high < fs / 2:
            raise InvalidArgument(f"band upper edge {self.high} Hz must be below Nyquist {fs / 2} Hz")

    def mask(self, freqs: np.ndarray) -> np.ndarray:
        return (freqs >= self.low) & (freqs <= self.high)


@dataclass(frozen=True, eq=False)
class VideoCube:
    """Frames as a T x H x W x C float array."""

    frames: np.ndarray
    fs: float = 30.0

    def __post_init__(self):
        v = _frozen(self.frames)
        if v.ndim != 4:
            raise InvalidArgument(f"video cube must be T x H x W x C, got shape {v.shape}")
        object.__setattr__(self, "frames", v)


# --------------------------------------------------------------------------- FFT


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def default_nfft(length: int) -> int:
    """Smallest power of two >= max(1024, 4 * length)."""
    return next_pow2(max(1024, 4 * length))


_BITREV_CACHE: dict[int, np.ndarray] = {}


def _bitrev(n: int) -> np.ndarray:
    idx = _BITREV_CACHE.get(n)
    if idx is None:
        bits = n.bit_length() - 1
        idx = np.zeros(n, dtype=np.intp)
        for b in range(bits):
            idx |= ((np.arange(n) >> b) & 1) << (bits - 1 - b)
        _BITREV_CACHE[n] = idx
    return idx


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not is_pow2(n):
        raise InvalidArgument(f"radix-2 FFT needs a power-of-two length, got {n}")
    lead = x.shape[:-1]
    y = x[..., _bitrev(n)]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        y = y.reshape(*lead, n // size, size)
        even = y[..., :half]
        odd = y[..., half:] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return y.reshape(*lead, n)


def ifft(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.complex128)
    return np.conj(fft(np.conj(X))) / X.shape[-1]


def power_spectrum(x: np.ndarray, n_fft: int) -> tuple[np.ndarray, np.ndarray]:
    """One-sided |DFT|^2 of zero-padded rows of ``x``.

    Returns ``(powers, X)`` where ``X`` is the full complex transform, kept
    so callers can run :func:`power_spectrum_vjp` without recomputing it.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    if n_fft < T:
        raise InvalidArgument(f"n_fft={n_fft} shorter than signal length {T}")
    pad = np.zeros(x.shape[:-1] + (n_fft,))
    pad[..., :T] = x
    X = fft(pad)
    return np.abs(X[..., : n_fft // 2 + 1]) ** 2, X


def power_spectrum_vjp(X: np.ndarray, g_powers: np.ndarray, length: int) -> np.ndarray:
    """Pull a gradient on one-sided powers back to the (unpadded) time samples.

    For P_k = |X_k|^2, dP_k/dx_n = 2 Re(conj(X_k) e^{-2 pi i k n / N}), hence
    grad_x = 2 N Re(ifft(g * X)) with g zero outside the one-sided bins.
    """
    n_fft = X.shape[-1]
    g = np.zeros(X.shape)
    g[..., : n_fft // 2 + 1] = g_powers
    return 2.0 * n_fft * np.real(ifft(g * X))[..., :length]


def fft_psd(w: Waveform, n_fft: int | None = None) -> Spectrum:
    n_fft = default_nfft(len(w)) if n_fft is None else int(n_fft)
    if not is_pow2(n_fft):
        raise InvalidArgument(f"n_fft must be a power of two, got {n_fft}")
    if n_fft < len(w):
        raise InvalidArgument(f"n_fft={n_fft} shorter than signal length {len(w)}")
    powers, _ = power_spectrum(w.samples, n_fft)
    return Spectrum(bin_width=w.fs / n_fft, powers=powers, n_fft=n_fft)


def band_bins(freqs: np.ndarray, band: BandLimits) -> np.ndarray:
    return np.flatnonzero(band.mask(freqs))


def hr_from_psd(spec: Spectrum, band: BandLimits = BandLimits()) -> float:
    """Heart rate in bpm at the in-band spectral peak; ties go to the lower bin."""
    idx = band_bins(spec.freqs, band)
    if idx.size < 2:
        raise InvalidArgument(
            f"band [{band.low}, {band.high}] Hz covers {idx.size} bins at width {spec.bin_width:.4g} Hz"
        )
    k = idx[int(np.argmax(spec.powers[idx]))]
    return 60.0 * k * spec.bin_width


# ---------------------------------------------------------------------- filtering


def butter1_bandpass_coeffs(band: BandLimits, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """First-order Butterworth bandpass (one biquad) via the bilinear transform.

    Edges are pre-warped, the analog prototype 1/(s+1) is mapped with
    s -> (s^2 + w0^2) / (B s), then s = 2 fs (z-1)/(z+1).
    """
    band.check(fs)
    K = 2.0 * fs
    wl = K * math.tan(math.pi * band.low / fs)
    wh = K * math.tan(math.pi * band.high / fs)
    B = wh - wl
    w0sq = wl * wh
    a0 = K * K + B * K + w0sq
    b = np.array([B * K, 0.0, -B * K]) / a0
    a = np.array([1.0, (2.0 * w0sq - 2.0 * K * K) / a0, (K * K - B * K + w0sq) / a0])
    return b, a


def butter1_response(band: BandLimits, fs: float, f: np.ndarray | float) -> np.ndarray:
    """|H(e^{j 2 pi f / fs})| of the single (one-directional) pass."""
    b, a = butter1_bandpass_coeffs(band, fs)
    z = np.exp(-1j * 2 * np.pi * np.asarray(f, dtype=np.float64) / fs)
    num = b[0] + b[1] * z + b[2] * z * z
    den = a[0] + a[1] * z + a[2] * z * z
    return np.abs(num / den)


def _lfilter2(b: np.ndarray, a: np.ndarray, x: np.ndarray, zi: np.ndarray) -> np.ndarray:
    # transposed direct form II, second order, along the last axis
    y = np.empty_like(x)
    z0 = zi[0] * x[..., 0]
    z1 = zi[1] * x[..., 0]
    for n in range(x.shape[-1]):
        xn = x[..., n]
        yn = b[0] * xn + z0
        z0 = b[1] * xn - a[1] * yn + z1
        z1 = b[2] * xn - a[2] * yn
        y[..., n] = yn
    return y


def _steady_state(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    # filter state for a constant unit input already at equilibrium
    g = b.sum() / a.sum()
    z1 = b[2] - a[2] * g
    z0 = b[1] - a[1] * g + z1
    return np.array([z0, z1])


def filtfilt_butter1(x: np.ndarray, band: BandLimits, fs: float) -> np.ndarray:
    """Zero-phase (forward-backward) bandpass along the last axis of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    b, a = butter1_bandpass_coeffs(band, fs)
    zi = _steady_state(b, a)
    n = x.shape[-1]
    pad = min(9, n - 1)
    if pad > 0:
        left = 2 * x[..., :1] - x[..., pad:0:-1]
        right = 2 * x[..., -1:] - x[..., -2 : -pad - 2 : -1]
        ext = np.concatenate([left, x, right], axis=-1)
    else:
        ext = x
    y = _lfilter2(b, a, ext, zi)
    y = _lfilter2(b, a, y[..., ::-1], zi)[..., ::-1]
    return y[..., pad : pad + n] if pad > 0 else y


def bandpass_butter1(w: Waveform, band: BandLimits = BandLimits()) -> Waveform:
    band.check(w.fs)
    return Waveform(filtfilt_butter1(w.samples, band, w.fs), w.fs)


# ------------------------------------------------------------------ misc helpers


def resample_linear(w: Waveform, fs_target: float) -> Waveform:
    if not fs_target > 0:
        raise InvalidArgument(f"target rate must be positive, got {fs_target}")
    if fs_target == w.fs:
        return Waveform(w.samples, w.fs)
    # output grid at exact multiples of 1/fs_target inside the input span
    n_new = max(2, int(math.floor(w.duration * fs_target + 1e-9)) + 1)
    t_old = np.arange(len(w)) / w.fs
    t_new = np.minimum(np.arange(n_new) / fs_target, t_old[-1])
    return Waveform(np.interp(t_new, t_old, w.samples), fs_target)


def standardize_array(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=axis, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=axis, keepdims=True)
    safe = np.where(var < 1e-12, 1.0, np.sqrt(var))
    return np.where(var < 1e-12, 0.0, (x - mu) / safe)


def standardize(w: Waveform) -> Waveform:
    return Waveform(standardize_array(w.samples), w.fs)


def standardize_vjp(z: np.ndarray, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gradient through row-wise standardization ``z = (x - mean) / std``."""
    sd = x.std(axis=-1, keepdims=True)
    sd = np.where(sd < 1e-6, 1.0, sd)
    gm = g.mean(axis=-1, keepdims=True)
    gz = (g * z).mean(axis=-1, keepdims=True)
    return (g - gm - z * gz) / sd


def frame_diff(clip: VideoCube, normalize: bool = True) -> VideoCube:
    """Consecutive-frame differences, last difference repeated, then per-channel standardization."""
    v = clip.frames
    if v.shape[0] < 2:
        raise InvalidArgument("frame differencing needs at least 2 frames")
    d = np.empty_like(v)
    d[:-1] = v[1:] - v[:-1]
    d[-1] = d[-2]
    if normalize:
        flat = d.reshape(-1, d.shape[-1])
        d = standardize_array(flat, axis=0).reshape(d.shape)
    return VideoCube(d, clip.fs)


# ----------------------------------------------------------------------------- IO


def write_waveform_csv(w: Waveform, path: str | Path) -> None:
    lines = [f"# fs={w.fs!r}", "t,value"]
    lines += [f"{i / w.fs!r},{v!r}" for i, v in enumerate(w.samples.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_waveform_csv(path: str | Path) -> Waveform:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# fs="):
        raise InvalidArgument(f"{path}: first line must be '# fs=<float>'")
    fs = float(text[0][len("# fs=") :])
    if len(text) < 2 or text[1].strip() != "t,value":
        raise InvalidArgument(f"{path}: missing 't,value' header")
    vals = [float(line.split(",")[1]) for line in text[2:] if line.strip()]
    return Waveform(np.array(vals), fs)
