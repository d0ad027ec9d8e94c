"""Command-line entry point.

Every command resolves its settings as defaults < ``PULSEFORGE_SEED`` (seed
only) < ``--config`` JSON < explicit flags, echoes the resolved settings to
stdout and writes them to ``run_config.json`` next to its outputs.

Exit codes: 0 success, 2 usage or I/O problem, 3 domain-contract violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from pulseforge import losses
from pulseforge import mstmap as mm
from pulseforge.errors import DegenerateInput, InvalidArgument
from pulseforge.model import checkpoint, stencoder, stformer
from pulseforge.pipeline import dataset as ds
from pulseforge.pipeline import infer, train
from pulseforge.pipeline.augment import AugmentFlags
from pulseforge.signalcore import BandLimits, VideoCube, Waveform
from pulseforge.synth import HR_RANGE_BPM

log = logging.getLogger("pulseforge")


class UsageError(Exception):
    """Bad flags, unreadable inputs or unwritable outputs (exit 2)."""


_BAND = {"band_low": 0.66, "band_high": 3.0}
_TRAIN = {
    "batch_size": 4,
    "epochs": 1,
    "steps": None,
    "weight_decay": 0.01,
    "seed": 0,
    "flip_time": False,
    "flip_roi": False,
    "freq_resample": False,
    "delta_f": 6,
    "segments": 3,
    "window": 300,
    "step": 15,
    "clip_len": 300,
    "delta_t": 150,
    "n_offsets": 2,
    "input_mode": "temporal",
    "split": "all",
    **_BAND,
}

DEFAULTS: dict[str, dict] = {
    "synth": {
        "out": None,
        "n": 8,
        "hr": None,
        "hr_min": 48.0,
        "hr_max": 150.0,
        "seed": 0,
        "meta_rois": 6,
        "duration": 20.0,
        "fs": 30.0,
        "snr": 10.0,
        "harmonic": 0.3,
        "illum_drift": 0.0,
        "motion_amp": 0.0,
        "video_size": 0,
    },
    "mstmap": {"input": None, "out": None},
    "pretrain": {
        "manifest": None,
        "out": None,
        "regime": "selfsup",
        "lr": 1e-4,
        "D": 128,
        "L": 6,
        "s_sp": 2,
        "width": 8,
        **_TRAIN,
    },
    "finetune": {
        "manifest": None,
        "checkpoint": None,
        "out": None,
        "lr": 1e-5,
        "alpha": 0.1,
        "beta": 0.2,
        "pearson_weight": 1.0,
        "selfsup_weight": 1.0,
        **_TRAIN,
    },
    "predict": {
        "manifest": None,
        "checkpoint": None,
        "out": None,
        "mode": "baseline",
        "window": 300,
        "step": 15,
        "clip_len": 300,
        "reduce": "mean",
        "input_mode": "temporal",
        "jobs": 1,
        **_BAND,
    },
    "evaluate": {"predictions": None, "manifest": None, "out": None},
    "ensemble": {"inputs": None, "out": None},
}

REQUIRED = {
    "synth": ["out"],
    "mstmap": ["input", "out"],
    "pretrain": ["manifest", "out"],
    "finetune": ["manifest", "checkpoint", "out"],
    "predict": ["manifest", "out"],
    "evaluate": ["predictions", "manifest", "out"],
    "ensemble": ["inputs", "out"],
}

HELP = {
    "out": "output directory (mstmap: output CSV file)",
    "n": "number of samples",
    "hr": f"fixed heart rate in bpm, {HR_RANGE_BPM[0]:g}-{HR_RANGE_BPM[1]:g}; unset draws uniformly from [hr-min, hr-max]",
    "meta_rois": "meta-ROI count R (N = 2^R - 1 combinations)",
    "duration": "sample duration in seconds",
    "snr": "signal-to-noise ratio in dB ('inf' disables noise)",
    "harmonic": "second-harmonic amplitude relative to the fundamental",
    "illum_drift": "slow illumination drift amplitude (fraction of baseline)",
    "motion_amp": "in-band luminance flicker amplitude (fraction of baseline)",
    "video_size": "video cube height/width in pixels (0: no video)",
    "regime": "selfsup (solution 1) or contrastive (solution 2)",
    "D": "transformer feature dimension",
    "L": "spatial-temporal encoder loops",
    "s_sp": "ST-rPPG block spatial resolution",
    "width": "spatiotemporal encoder channel width",
    "window": "MSTmap window length in frames",
    "step": "MSTmap window step in frames",
    "clip_len": "video clip length in frames",
    "delta_t": "ST-rPPG sample length in frames",
    "n_offsets": "ST-rPPG start offsets drawn per spatial cell",
    "delta_f": "sparsity padding around the spectral peak, in PSD bins",
    "segments": "periodicity-loss segment count",
    "split": "which 8:2 hash split to train on: all, train or val",
    "input_mode": "video input: temporal (per-pixel mean removed) or diff (frame differences)",
    "mode": "baseline, solution1 or solution2",
    "reduce": "window-to-video HR reduction: mean or median",
    "jobs": "parallel prediction workers",
    "predictions": "prediction summary CSV (sample_id,video_hr)",
    "inputs": "two or more prediction summary CSVs",
    "input": "MSTmap binary file",
}


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _parse_type(key: str, default):
    if key in ("steps",):
        return int
    if key in ("hr", "snr"):
        return float
    if isinstance(default, bool):
        return None
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pulseforge", description="Self-supervised rPPG heart-rate toolkit")
    ap.add_argument("-v", "--verbose", action="store_true", help="line-per-epoch logging")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd, defaults in DEFAULTS.items():
        sp = sub.add_parser(cmd, help=f"{cmd} command", argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON file of settings; flags override it")
        for key, default in defaults.items():
            text = HELP.get(key, key.replace("_", " "))
            req = " (required)" if key in REQUIRED[cmd] else ""
            h = f"{text}{req} (default: {default})"
            if key == "seed":
                h = f"random seed; falls back to $PULSEFORGE_SEED (default: {default})"
            if isinstance(default, bool):
                sp.add_argument(_flag(key), dest=key, action="store_true", help=h)
            elif key == "inputs":
                sp.add_argument(_flag(key), dest=key, nargs="+", help=h)
            else:
                sp.add_argument(_flag(key), dest=key, type=_parse_type(key, default), help=h)
    return ap


def resolve(cmd: str, ns: argparse.Namespace, env=os.environ) -> dict:
    cfg = dict(DEFAULTS[cmd])
    if "seed" in cfg and env.get("PULSEFORGE_SEED"):
        try:
            cfg["seed"] = int(env["PULSEFORGE_SEED"])
        except ValueError as exc:
            raise UsageError(f"PULSEFORGE_SEED must be an integer: {exc}") from exc
    given = vars(ns)
    if given.get("config"):
        try:
            file_cfg = json.loads(Path(given["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {given['config']}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
        cfg.update(file_cfg)
    cfg.update({k: v for k, v in given.items() if k in cfg})
    missing = [k for k in REQUIRED[cmd] if cfg.get(k) in (None, "", [])]
    if missing:
        raise UsageError(f"{cmd}: missing required setting(s): {', '.join(_flag(k) for k in missing)}")
    return cfg


def _echo(cfg: dict, out_dir: Path) -> None:
    text = json.dumps(cfg, indent=2, sort_keys=True)
    print(text)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "run_config.json").write_text(text + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write to {out_dir}: {exc}") from exc


def _load(fn, *args, **kw):
    """Run a loader; unreadable or malformed files become usage errors."""
    try:
        return fn(*args, **kw)
    except (OSError, InvalidArgument, ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from exc


def _band(cfg) -> BandLimits:
    return BandLimits(cfg["band_low"], cfg["band_high"])


def _loss_cfg(cfg) -> losses.LossConfig:
    return losses.LossConfig(
        band=_band(cfg),
        delta_f_bins=cfg["delta_f"],
        n_segments=cfg["segments"],
        alpha=cfg.get("alpha", 0.1),
        beta=cfg.get("beta", 0.2),
    )


def _train_cfg(cfg) -> train.TrainConfig:
    return train.TrainConfig(
        lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        steps=cfg["steps"],
        weight_decay=cfg["weight_decay"],
        seed=cfg["seed"],
        augment=AugmentFlags(cfg["flip_time"], cfg["flip_roi"], cfg["freq_resample"]),
        selfsup_weight=cfg.get("selfsup_weight", 1.0),
        pearson_weight=cfg.get("pearson_weight", 1.0),
    )


def _select(samples, split: str):
    if split == "all":
        return samples
    if split not in ("train", "val"):
        raise UsageError(f"split must be all, train or val, got {split!r}")
    tr, va = ds.split_by_hash([s.sample_id for s in samples])
    keep = set(tr if split == "train" else va)
    return [s for s in samples if s.sample_id in keep]


def _windows(samples, window: int, step: int, with_labels: bool = False):
    spec = mm.WindowSpec(window, step)
    maps, labels = [], []
    for s in samples:
        if s.mstmap is None:
            raise InvalidArgument(f"{s.sample_id}: no MSTmap on disk")
        for st in mm.window_starts(s.mstmap.T, spec):
            maps.append(mm.MstMap(s.mstmap.data[st : st + window], s.mstmap.fs, s.mstmap.meta_roi_count))
            if with_labels:
                if s.ppg is None:
                    raise InvalidArgument(f"{s.sample_id}: no PPG labels on disk")
                labels.append(Waveform(s.ppg.samples[st : st + window], s.ppg.fs))
    return maps, labels


def _clips(samples, clip_len: int, with_labels: bool = False):
    clips, labels = [], []
    for s in samples:
        if s.video is None:
            raise InvalidArgument(f"{s.sample_id}: no video cube on disk")
        for k in range(s.video.frames.shape[0] // clip_len):
            sl = slice(k * clip_len, (k + 1) * clip_len)
            clips.append(VideoCube(s.video.frames[sl], s.video.fs))
            if with_labels:
                if s.ppg is None:
                    raise InvalidArgument(f"{s.sample_id}: no PPG labels on disk")
                labels.append(Waveform(s.ppg.samples[sl], s.ppg.fs))
    return clips, labels


# -------------------------------------------------------------------- commands


def cmd_synth(cfg: dict) -> None:
    lo, hi = HR_RANGE_BPM
    for key in ("hr", "hr_min", "hr_max"):
        v = cfg[key]
        if v is not None and not lo <= v <= hi:
            raise UsageError(f"--{key.replace('_', '-')} {v:g} is outside the valid range {lo:g}-{hi:g} bpm")
    if cfg["hr_min"] > cfg["hr_max"]:
        raise UsageError("--hr-min must not exceed --hr-max")
    out = Path(cfg["out"])
    _echo(cfg, out)
    spec = ds.DatasetSpec(
        n=cfg["n"],
        hr_bpm=cfg["hr"],
        hr_range=(cfg["hr_min"], cfg["hr_max"]),
        seed=cfg["seed"],
        meta_rois=cfg["meta_rois"],
        duration_s=cfg["duration"],
        fs=cfg["fs"],
        snr_db=cfg["snr"],
        harmonic_ratio=cfg["harmonic"],
        illum_drift=cfg["illum_drift"],
        motion_amp=cfg["motion_amp"],
        video_size=cfg["video_size"],
    )
    samples = ds.generate(spec)
    try:
        ds.write_dataset(samples, out)
    except OSError as exc:
        raise UsageError(f"cannot write dataset to {out}: {exc}") from exc


def cmd_mstmap(cfg: dict) -> None:
    m = _load(mm.load, cfg["input"])
    out = Path(cfg["out"])
    _echo(cfg, out.parent)
    try:
        mm.write_csv(m, out)
    except OSError as exc:
        raise UsageError(str(exc)) from exc


def cmd_pretrain(cfg: dict) -> None:
    out = Path(cfg["out"])
    _echo(cfg, out)
    samples = _select(_load(ds.load_dataset, cfg["manifest"], video=cfg["regime"] == "contrastive"), cfg["split"])
    tcfg = _train_cfg(cfg)
    if cfg["regime"] == "selfsup":
        windows, _ = _windows(samples, cfg["window"], cfg["step"])
        if not windows:
            raise InvalidArgument("empty dataset")
        mcfg = stformer.ModelConfig(D=cfg["D"], L=cfg["L"], N=windows[0].N, T=cfg["window"])
        params = stformer.init_params(mcfg, cfg["seed"])
        params, trace = train.pretrain_selfsup(windows, params, mcfg, tcfg, _loss_cfg(cfg))
    elif cfg["regime"] == "contrastive":
        clips, _ = _clips(samples, cfg["clip_len"])
        mcfg = stencoder.EncoderConfig(S_sp=cfg["s_sp"], width=cfg["width"])
        params = stencoder.init_params(mcfg, cfg["seed"])
        ccfg = train.ContrastConfig(cfg["delta_t"], cfg["n_offsets"], cfg["input_mode"])
        params, trace = train.pretrain_contrastive(clips, params, mcfg, tcfg, ccfg, _loss_cfg(cfg))
    else:
        raise UsageError(f"--regime must be selfsup or contrastive, got {cfg['regime']!r}")
    checkpoint.save(out / "model.rppg", params, mcfg)
    infer.write_trace_csv(trace, out / "loss_trace.csv")


def cmd_finetune(cfg: dict) -> None:
    out = Path(cfg["out"])
    _echo(cfg, out)
    params, mcfg = _load(checkpoint.load, cfg["checkpoint"])
    solution2 = isinstance(mcfg, stencoder.EncoderConfig)
    samples = _select(_load(ds.load_dataset, cfg["manifest"], video=solution2), cfg["split"])
    tcfg = _train_cfg(cfg)
    if solution2:
        clips, labels = _clips(samples, cfg["clip_len"], with_labels=True)
        ccfg = train.ContrastConfig(cfg["delta_t"], cfg["n_offsets"], cfg["input_mode"])
        params, trace = train.finetune_stencoder(clips, labels, params, mcfg, tcfg, ccfg, _loss_cfg(cfg))
    else:
        windows, labels = _windows(samples, mcfg.T, cfg["step"], with_labels=True)
        params, trace = train.finetune_stformer(windows, labels, params, mcfg, tcfg, _loss_cfg(cfg))
    checkpoint.save(out / "model.rppg", params, mcfg)
    infer.write_trace_csv(trace, out / "loss_trace.csv")


def cmd_predict(cfg: dict) -> None:
    out = Path(cfg["out"])
    mode = cfg["mode"]
    if mode not in infer.MODES:
        raise UsageError(f"--mode must be one of {', '.join(infer.MODES)}")
    _echo(cfg, out)
    params = mcfg = None
    if mode != "baseline":
        if not cfg["checkpoint"]:
            raise UsageError(f"--checkpoint is required for mode {mode}")
        params, mcfg = _load(checkpoint.load, cfg["checkpoint"])
        want = stformer.ModelConfig if mode == "solution1" else stencoder.EncoderConfig
        if not isinstance(mcfg, want):
            raise UsageError(f"checkpoint does not hold a {mode} model")
    samples = _load(ds.load_dataset, cfg["manifest"], video=mode == "solution2")
    icfg = infer.InferConfig(
        window=mm.WindowSpec(cfg["window"], cfg["step"]),
        clip_len=cfg["clip_len"],
        band=_band(cfg),
        reduce=cfg["reduce"],
        input_mode=cfg["input_mode"],
    )
    preds = infer.predict_many(samples, params, mcfg, mode, icfg, jobs=cfg["jobs"])
    infer.write_window_csv(preds, out / "windows.csv")
    infer.write_summary_csv(preds, out / "summary.csv")


def _ground_truth(path) -> dict[str, float]:
    import csv

    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        cols = reader.fieldnames or []
        key = "hr_bpm" if "hr_bpm" in cols else "hr_gt" if "hr_gt" in cols else None
        if "sample_id" not in cols or key is None:
            raise InvalidArgument(f"{path}: needs sample_id and hr_bpm (or hr_gt) columns")
        return {r["sample_id"]: float(r[key]) for r in reader}


def cmd_evaluate(cfg: dict) -> None:
    out = Path(cfg["out"])
    _echo(cfg, out)
    preds = _load(infer.read_summary_csv, cfg["predictions"])
    gt = _load(_ground_truth, cfg["manifest"])
    report = infer.evaluate(preds, gt)
    infer.write_report_csv(report, out / "report.csv")
    print(f"rmse={report.rmse!r} count={report.count}")


def cmd_ensemble(cfg: dict) -> None:
    inputs = cfg["inputs"]
    if len(inputs) < 2:
        raise UsageError("ensemble needs at least two prediction files")
    out = Path(cfg["out"])
    _echo(cfg, out)
    runs = [_load(infer.read_summary_csv, p) for p in inputs]
    infer.write_summary_csv(infer.ensemble(runs), out / "summary.csv")


COMMANDS = {
    "synth": cmd_synth,
    "mstmap": cmd_mstmap,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "ensemble": cmd_ensemble,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve(ns.command, ns)
        COMMANDS[ns.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvalidArgument, DegenerateInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
