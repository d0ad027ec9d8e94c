"""Windowed HR inference, RMSE evaluation and prediction ensembling."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from pulseforge.errors import InvalidArgument
from pulseforge.model import stencoder, stformer
from pulseforge.mstmap import WindowSpec, window_starts
from pulseforge.pipeline.dataset import Sample
from pulseforge.pipeline.train import prepare_clip
from pulseforge.signalcore import (
    BandLimits,
    Spectrum,
    default_nfft,
    filtfilt_butter1,
    hr_from_psd,
    power_spectrum,
)

MODES = ("solution1", "solution2", "baseline")


@dataclass
class HrPrediction:
    sample_id: str
    window_hrs: list[float]
    video_hr: float


@dataclass
class EvalReport:
    rows: list[tuple[str, float, float]]  # (sample_id, hr_pred, hr_gt)
    rmse: float

    @property
    def count(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class InferConfig:
    window: WindowSpec = WindowSpec(300, 15)
    clip_len: int = 300
    band: BandLimits = BandLimits()
    reduce: str = "mean"  # or "median"
    input_mode: str = "temporal"


def hr_of_rows(y: np.ndarray, fs: float, band: BandLimits = BandLimits()) -> list[float]:
    """Bandpass each row, then read the PSD peak in bpm."""
    y = filtfilt_butter1(np.atleast_2d(y), band, fs)
    n_fft = default_nfft(y.shape[-1])
    P, _ = power_spectrum(y, n_fft)
    return [hr_from_psd(Spectrum(fs / n_fft, p, n_fft), band) for p in P]


def _reduce(hrs: Sequence[float], how: str) -> float:
    if how == "mean":
        return float(np.mean(hrs))
    if how == "median":
        return float(np.median(hrs))
    raise InvalidArgument(f"unknown window reduction {how!r}")


def predict_hr(sample: Sample, params=None, model_cfg=None, mode: str = "baseline", cfg: InferConfig = InferConfig()) -> HrPrediction:
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "solution2":
        if sample.video is None:
            raise InvalidArgument(f"{sample.sample_id}: solution2 needs a video cube")
        frames = sample.video.frames
        n = frames.shape[0] // cfg.clip_len
        if n < 1:
            raise InvalidArgument(f"{sample.sample_id}: shorter than one {cfg.clip_len}-frame clip")
        rows = []
        for k in range(n):
            clip = prepare_clip(frames[k * cfg.clip_len : (k + 1) * cfg.clip_len], cfg.input_mode)
            out, _ = stencoder.forward(params, model_cfg, clip)
            rows.append(out.mean(axis=(1, 2)))
        hrs = hr_of_rows(np.stack(rows), sample.video.fs, cfg.band)
        return HrPrediction(sample.sample_id, hrs, _reduce(hrs, cfg.reduce))

    m = sample.mstmap
    if m is None:
        raise InvalidArgument(f"{sample.sample_id}: {mode} needs an MSTmap")
    win = cfg.window
    if mode == "solution1":
        win = WindowSpec(model_cfg.T, cfg.window.step)
    if m.T < win.window_len:
        raise InvalidArgument(f"{sample.sample_id}: {m.T} frames is shorter than one {win.window_len}-frame window")
    starts = window_starts(m.T, win)
    if mode == "solution1":
        stack = np.stack([m.data[s : s + win.window_len] for s in starts])
        y, _ = stformer.forward_batch(params, model_cfg, stack)
    else:
        green = m.data[:, :, 1].mean(axis=1)
        y = np.stack([green[s : s + win.window_len] for s in starts])
    hrs = hr_of_rows(y, m.fs, cfg.band)
    return HrPrediction(sample.sample_id, hrs, _reduce(hrs, cfg.reduce))


def predict_many(samples: Sequence[Sample], params=None, model_cfg=None, mode="baseline", cfg=InferConfig(), jobs: int = 1) -> list[HrPrediction]:
    """Per-sample predictions in input order; ``jobs > 1`` uses a thread pool."""

    def one(s):
        return predict_hr(s, params, model_cfg, mode, cfg)

    if jobs <= 1:
        return [one(s) for s in samples]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(one, samples))


def rmse(rows: Iterable) -> float:
    """Root mean squared error over (pred, gt) pairs or (id, pred, gt) rows."""
    diffs = []
    for r in rows:
        pred, gt = (r[1], r[2]) if len(r) == 3 else (r[0], r[1])
        diffs.append(float(pred) - float(gt))
    if not diffs:
        raise InvalidArgument("rmse needs at least one row")
    return math.sqrt(sum(d * d for d in diffs) / len(diffs))


def evaluate(predictions: Sequence[HrPrediction], ground_truth: dict[str, float]) -> EvalReport:
    rows = []
    for p in predictions:
        if p.sample_id not in ground_truth:
            raise InvalidArgument(f"no ground truth for sample {p.sample_id!r}")
        rows.append((p.sample_id, p.video_hr, float(ground_truth[p.sample_id])))
    return EvalReport(rows, rmse(rows))


def ensemble(runs: Sequence[Sequence[HrPrediction]]) -> list[HrPrediction]:
    """Per-sample mean of video HRs across runs; member video HRs kept as ``window_hrs``."""
    if not runs:
        raise InvalidArgument("ensemble needs at least one prediction set")
    ids = [p.sample_id for p in runs[0]]
    for r in runs[1:]:
        if sorted(p.sample_id for p in r) != sorted(ids):
            raise InvalidArgument("prediction sets cover different samples")
    by_run = [{p.sample_id: p.video_hr for p in r} for r in runs]
    out = []
    for sid in ids:
        members = [d[sid] for d in by_run]
        out.append(HrPrediction(sid, members, sum(members) / len(members)))
    return out


# ----------------------------------------------------------------------------- IO


def write_window_csv(preds: Sequence[HrPrediction], path: str | Path) -> None:
    lines = ["sample_id,window_index,hr_bpm"]
    for p in preds:
        lines += [f"{p.sample_id},{i},{h!r}" for i, h in enumerate(p.window_hrs)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_csv(preds: Sequence[HrPrediction], path: str | Path) -> None:
    lines = ["sample_id,video_hr"] + [f"{p.sample_id},{p.video_hr!r}" for p in preds]
    Path(path).write_text("\n".join(lines) + "\n")


def read_summary_csv(path: str | Path) -> list[HrPrediction]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        if reader.fieldnames != ["sample_id", "video_hr"]:
            raise InvalidArgument(f"{path}: expected header 'sample_id,video_hr'")
        try:
            return [HrPrediction(r["sample_id"], [], float(r["video_hr"])) for r in reader]
        except (TypeError, ValueError) as exc:
            raise InvalidArgument(f"{path}: malformed row ({exc})") from exc


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    lines = ["sample_id,hr_pred,hr_gt"] + [f"{s},{p!r},{g!r}" for s, p, g in report.rows]
    lines.append(f"# rmse={report.rmse!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_trace_csv(trace, path: str | Path) -> None:
    lines = ["step,loss_name,value"] + [f"{r.step},{r.loss_name},{r.value!r}" for r in trace]
    Path(path).write_text("\n".join(lines) + "\n")
