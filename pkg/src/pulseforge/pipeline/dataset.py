"""Synthetic datasets on disk: manifest CSV plus per-sample PPG, MSTmap and video files."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from pulseforge import mstmap as mm
from pulseforge import synth
from pulseforge.errors import InvalidArgument
from pulseforge.signalcore import VideoCube, Waveform, read_waveform_csv, write_waveform_csv

MANIFEST_FIELDS = ["sample_id", "path", "hr_bpm", "fs", "duration_s", "seed"]
PPG_FILE = "ppg.csv"
MSTMAP_FILE = "mstmap.bin"
VIDEO_FILE = "video.vcub"


@dataclass
class Sample:
    sample_id: str
    hr_bpm: float
    fs: float
    duration_s: float
    seed: int
    ppg: Waveform | None = None
    mstmap: mm.MstMap | None = None
    video: VideoCube | None = None


@dataclass(frozen=True)
class DatasetSpec:
    n: int = 8
    hr_bpm: float | None = None  # fixed HR; None -> uniform in hr_range
    hr_range: tuple[float, float] = (48.0, 150.0)
    seed: int = 0
    meta_rois: int = 6
    duration_s: float = 20.0
    fs: float = 30.0
    snr_db: float = 10.0
    harmonic_ratio: float = 0.3
    illum_drift: float = 0.0
    motion_amp: float = 0.0
    roi_gain_min: float = 0.2  # ROI gains fall linearly from 1 to this value
    video_size: int = 0  # 0 -> no video cubes

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgument("dataset needs n >= 1")
        lo, hi = synth.HR_RANGE_BPM
        if self.hr_bpm is not None and not lo <= self.hr_bpm <= hi:
            raise InvalidArgument(f"hr must lie in [{lo:g}, {hi:g}] bpm, got {self.hr_bpm}")
        if not lo <= self.hr_range[0] <= self.hr_range[1] <= hi:
            raise InvalidArgument(f"hr range must lie within [{lo:g}, {hi:g}] bpm")


def generate(spec: DatasetSpec) -> list[Sample]:
    rng = np.random.default_rng(spec.seed)
    if spec.hr_bpm is None:
        hrs = rng.uniform(*spec.hr_range, size=spec.n)
    else:
        hrs = np.full(spec.n, float(spec.hr_bpm))
    seeds = rng.integers(0, 2**31 - 1, size=spec.n)
    gains = tuple(np.linspace(1.0, spec.roi_gain_min, spec.meta_rois).tolist())
    out = []
    for i, (hr, sd) in enumerate(zip(hrs.tolist(), seeds.tolist())):
        ss = synth.SynthSpec(
            hr_bpm=hr,
            fs=spec.fs,
            duration_s=spec.duration_s,
            snr_db=spec.snr_db,
            harmonic_ratio=spec.harmonic_ratio,
            roi_gains=gains,
            seed=int(sd),
            illum_drift=spec.illum_drift,
            motion_amp=spec.motion_amp,
        )
        sums, counts = synth.gen_roi_arrays(ss, spec.meta_rois)
        m = mm.build_mstmap_arrays(sums, counts, spec.fs)
        ppg = Waveform(synth.clean_pulse(ss), spec.fs)
        video = None
        if spec.video_size:
            video, _ = synth.gen_video_cube(ss, spec.video_size, spec.video_size)
        out.append(Sample(f"s{i:04d}", hr, spec.fs, spec.duration_s, int(sd), ppg, m, video))
    return out


def split_by_hash(ids: Sequence[str], train_fraction: float = 0.8) -> tuple[list[str], list[str]]:
    """Deterministic train/validation split on a hash of each sample id."""
    train, val = [], []
    for s in ids:
        h = int.from_bytes(hashlib.sha256(s.encode()).digest()[:8], "big") / 2**64
        (train if h < train_fraction else val).append(s)
    return train, val


# ----------------------------------------------------------------------------- IO


def write_dataset(samples: Sequence[Sample], root: str | Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in samples:
        rel = Path("samples") / s.sample_id
        d = root / rel
        d.mkdir(parents=True, exist_ok=True)
        if s.ppg is not None:
            write_waveform_csv(s.ppg, d / PPG_FILE)
        if s.mstmap is not None:
            mm.save(s.mstmap, d / MSTMAP_FILE)
        if s.video is not None:
            synth.write_vcub(s.video, d / VIDEO_FILE)
        rows.append([s.sample_id, rel.as_posix(), repr(s.hr_bpm), repr(s.fs), repr(s.duration_s), str(s.seed)])
    manifest = root / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        w.writerows(rows)
    return manifest


def read_manifest(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(MANIFEST_FIELDS) <= set(reader.fieldnames):
            raise InvalidArgument(f"{path}: manifest must have columns {','.join(MANIFEST_FIELDS)}")
        return list(reader)


def load_dataset(manifest: str | Path, video: bool = True) -> list[Sample]:
    manifest = Path(manifest)
    out = []
    for row in read_manifest(manifest):
        d = manifest.parent / row["path"]
        fs = float(row["fs"])
        s = Sample(row["sample_id"], float(row["hr_bpm"]), fs, float(row["duration_s"]), int(row["seed"]))
        if (d / PPG_FILE).exists():
            s.ppg = read_waveform_csv(d / PPG_FILE)
        if (d / MSTMAP_FILE).exists():
            s.mstmap = mm.load(d / MSTMAP_FILE)
        if video and (d / VIDEO_FILE).exists():
            s.video = synth.read_vcub(d / VIDEO_FILE, fs)
        out.append(s)
    return out
