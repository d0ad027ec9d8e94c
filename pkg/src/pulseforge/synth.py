"""Synthetic pulse data with known heart rate: waveforms, ROI statistics, video cubes."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from pulseforge.errors import InvalidArgument
from pulseforge.mstmap import RoiFrameStats
from pulseforge.signalcore import VideoCube, Waveform

HR_RANGE_BPM = (40.0, 180.0)
SKIN_RGB = np.array([170.0, 120.0, 95.0])
# relative pulse strength per colour channel (green strongest)
PULSE_RGB = np.array([0.5, 1.0, 0.3])
ROI_PULSE_AMP = 1.0  # green-channel pulse amplitude in 8-bit intensity units
VIDEO_PULSE_REL = 0.01

VCUB_MAGIC = b"VCUB"

# rng stream ids, so each component draws from an independent stream
_NOISE, _ROI, _ILLUM, _VIDEO, _MOTION = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class SynthSpec:
    hr_bpm: float = 72.0
    fs: float = 30.0
    duration_s: float = 20.0
    snr_db: float = 20.0  # math.inf disables noise
    harmonic_ratio: float = 0.3
    roi_gains: tuple[float, ...] | None = None  # None -> all ones
    seed: int = 0
    hr_drift_bpm_per_min: float = 0.0
    illum_drift: float = 0.0  # amplitude of slow common-mode illumination change, fraction of baseline
    motion_amp: float = 0.0  # in-band luminance flicker with wandering frequency, fraction of baseline

    def __post_init__(self):
        lo, hi = HR_RANGE_BPM
        if not lo <= self.hr_bpm <= hi:
            raise InvalidArgument(f"hr_bpm must lie in [{lo:g}, {hi:g}] bpm, got {self.hr_bpm}")
        if not self.fs > 2 * self.hr_bpm / 60.0:
            raise InvalidArgument(f"fs={self.fs} Hz cannot represent {self.hr_bpm} bpm")
        if not 0.0 <= self.harmonic_ratio <= 1.0:
            raise InvalidArgument("harmonic_ratio must lie in [0, 1]")
        if not self.duration_s > 0 or self.n_frames < 2:
            raise InvalidArgument("duration too short")
        if self.illum_drift < 0 or self.motion_amp < 0:
            raise InvalidArgument("illum_drift and motion_amp must be non-negative")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fs))

    def gains(self, R: int) -> np.ndarray:
        if self.roi_gains is None:
            return np.ones(R)
        g = np.asarray(self.roi_gains, dtype=np.float64)
        if g.shape != (R,):
            raise InvalidArgument(f"roi_gains has {g.size} entries, expected {R}")
        return g

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])


def hr_trace(spec: SynthSpec) -> np.ndarray:
    t = np.arange(spec.n_frames) / spec.fs
    return spec.hr_bpm + spec.hr_drift_bpm_per_min * t / 60.0


def clean_pulse(spec: SynthSpec) -> np.ndarray:
    """Noise-free pulse: fundamental plus scaled second harmonic."""
    f_inst = hr_trace(spec) / 60.0
    phase = 2 * np.pi * np.concatenate([[0.0], np.cumsum(f_inst[:-1]) / spec.fs])
    return np.sin(phase) + spec.harmonic_ratio * np.sin(2 * phase + 0.5)


def _noise_std(spec: SynthSpec, signal_power: float) -> float:
    if math.isinf(spec.snr_db):
        return 0.0
    return math.sqrt(signal_power / 10 ** (spec.snr_db / 10))


def gen_pulse(spec: SynthSpec) -> tuple[Waveform, np.ndarray]:
    """Noisy pulse waveform and the per-sample ground-truth HR trace (bpm)."""
    s = clean_pulse(spec)
    sd = _noise_std(spec, float(np.mean(s**2)))
    if sd > 0:
        s = s + spec.rng(_NOISE).normal(0.0, sd, s.size)
    return Waveform(s, spec.fs), hr_trace(spec)


def _illumination(spec: SynthSpec, T: int) -> np.ndarray:
    """Common-mode luminance gain: slow drift plus an optional in-band flicker."""
    t = np.arange(T) / spec.fs
    gain = np.ones(T)
    if spec.illum_drift > 0:
        rng = spec.rng(_ILLUM)
        freqs = rng.uniform(0.02, 0.3, 3)
        phases = rng.uniform(0, 2 * np.pi, 3)
        gain += spec.illum_drift * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None]).sum(0) / 3
    if spec.motion_amp > 0:
        rng = spec.rng(_MOTION)
        centre = rng.uniform(0.8, 2.8)
        wander = 0.4 * np.sin(2 * np.pi * t / rng.uniform(3.0, 8.0) + rng.uniform(0, 2 * np.pi))
        phase = 2 * np.pi * np.cumsum(centre + wander) / spec.fs
        gain += spec.motion_amp * np.sin(phase)
    return gain


def roi_pixel_counts(R: int) -> np.ndarray:
    return 300 + 40 * np.arange(R)


def gen_roi_arrays(spec: SynthSpec, R: int) -> tuple[np.ndarray, np.ndarray]:
    """(T x R x 3 pixel sums, R pixel counts)."""
    if R < 1:
        raise InvalidArgument("need at least one meta-ROI")
    gains = spec.gains(R)
    p = clean_pulse(spec)
    T = p.size
    base = SKIN_RGB[None, :] + 4.0 * np.arange(R)[:, None] * np.array([1.0, -0.5, 0.5])
    means = base[None] + (gains[:, None] * PULSE_RGB[None, :])[None] * ROI_PULSE_AMP * p[:, None, None]
    means = means * _illumination(spec, T)[:, None, None]
    sd = _noise_std(spec, ROI_PULSE_AMP**2 * float(np.mean(p**2)))
    if sd > 0:
        means = means + spec.rng(_ROI).normal(0.0, sd, means.shape)
    counts = roi_pixel_counts(R)
    return means * counts[None, :, None], counts


def gen_roi_stats(spec: SynthSpec, R: int) -> list[RoiFrameStats]:
    sums, counts = gen_roi_arrays(spec, R)
    return [RoiFrameStats(s, counts) for s in sums]


def gen_video_cube(spec: SynthSpec, H: int, W: int, gain: float = 1.0) -> tuple[VideoCube, Waveform]:
    """Static face-like pattern modulated by the pulse under a smooth spatial gain mask."""
    if H < 4 or W < 4:
        raise InvalidArgument("video needs H, W >= 4")
    p = clean_pulse(spec)
    yy, xx = np.meshgrid(np.linspace(-1, 1, H), np.linspace(-1, 1, W), indexing="ij")
    shade = 0.85 + 0.15 * np.cos(1.5 * xx) * np.cos(1.2 * yy)
    base = shade[..., None] * SKIN_RGB
    mask = gain * np.exp(-(xx**2 + yy**2) / 0.8)
    amp = base * mask[..., None] * PULSE_RGB * VIDEO_PULSE_REL  # H x W x 3
    frames = base[None] + amp[None] * p[:, None, None, None]
    frames = frames * _illumination(spec, p.size)[:, None, None, None]
    mean_amp = float(np.mean(amp[..., 1]))
    sd = _noise_std(spec, mean_amp**2 * float(np.mean(p**2)))
    if sd > 0:
        frames = frames + spec.rng(_VIDEO).normal(0.0, sd, frames.shape)
    return VideoCube(frames, spec.fs), Waveform(p, spec.fs)


def with_seed(spec: SynthSpec, seed: int) -> SynthSpec:
    return replace(spec, seed=seed)


# ----------------------------------------------------------------------------- IO


def write_vcub(cube: VideoCube, path: str | Path) -> None:
    T, H, W, C = cube.frames.shape
    Path(path).write_bytes(VCUB_MAGIC + struct.pack("<4I", T, H, W, C) + cube.frames.astype("<f4").tobytes())


def read_vcub(path: str | Path, fs: float = 30.0) -> VideoCube:
    buf = Path(path).read_bytes()
    if buf[:4] != VCUB_MAGIC or len(buf) < 20:
        raise InvalidArgument(f"{path}: not a video cube")
    T, H, W, C = struct.unpack_from("<4I", buf, 4)
    if len(buf) - 20 != 4 * T * H * W * C:
        raise InvalidArgument(f"{path}: payload size does not match header")
    data = np.frombuffer(buf, "<f4", offset=20).astype(np.float64).reshape(T, H, W, C)
    return VideoCube(data, fs)
