"""Training regimes: self-supervised pretraining, contrastive pretraining, supervised finetuning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from pulseforge import losses
from pulseforge.errors import InvalidArgument
from pulseforge.model import stencoder, stformer
from pulseforge.mstmap import MstMap
from pulseforge.pipeline.augment import AugmentFlags, augment_mstmap
from pulseforge.pipeline.optim import AdamState, adamw_step
from pulseforge.signalcore import VideoCube, Waveform, standardize_array, standardize_vjp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 4
    epochs: int = 1
    steps: int | None = None  # when set, overrides epochs
    weight_decay: float = 1e-2
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    augment: AugmentFlags = field(default_factory=AugmentFlags)
    # solution-1 finetuning: weights on the self-supervised total and on Pearson
    selfsup_weight: float = 1.0
    pearson_weight: float = 1.0

    def __post_init__(self):
        if not self.lr >= 0:
            raise InvalidArgument("lr must be non-negative")
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1")
        if self.epochs < 0 or (self.steps is not None and self.steps < 0):
            raise InvalidArgument("epochs/steps must be non-negative")


@dataclass
class TraceRow:
    step: int
    loss_name: str
    value: float


def _batches(n: int, cfg: TrainConfig, rng: np.random.Generator, min_batch: int = 1):
    """Yield index batches: ``steps`` batches if set, else full epochs (drop ragged tail)."""
    if n < min_batch:
        raise InvalidArgument(f"need at least {min_batch} training items, got {n}")
    bs = min(cfg.batch_size, n)
    if bs < min_batch:
        raise InvalidArgument(f"batch size must be >= {min_batch}")
    total = cfg.steps if cfg.steps is not None else cfg.epochs * max(1, n // bs)
    done = 0
    while done < total:
        order = rng.permutation(n)
        for s in range(0, n - bs + 1, bs):
            if done >= total:
                return
            yield order[s : s + bs]
            done += 1


def _step(params, grads, state, cfg: TrainConfig):
    return adamw_step(params, grads, state, cfg.lr, cfg.betas, cfg.eps, cfg.weight_decay)


# ------------------------------------------------------------------- solution 1


def selfsup_batch_loss(params, model_cfg, maps: np.ndarray, fs: float, loss_cfg: losses.LossConfig):
    """Forward a batch of raw windows, standardize outputs, score, and backprop."""
    y, cache = stformer.forward_batch(params, model_cfg, maps)
    z = standardize_array(y)
    L = losses.selfsup_terms(z, fs, loss_cfg)
    gy = standardize_vjp(z, y, L.grad)
    grads, _ = stformer.backward_batch(params, model_cfg, cache, gy)
    return L, grads


def pretrain_selfsup(
    windows: Sequence[MstMap],
    params: dict,
    model_cfg: stformer.ModelConfig,
    cfg: TrainConfig = TrainConfig(),
    loss_cfg: losses.LossConfig = losses.LossConfig(),
) -> tuple[dict, list[TraceRow]]:
    if not windows:
        raise InvalidArgument("empty dataset")
    T = windows[0].T
    if any(w.T != T for w in windows):
        raise InvalidArgument("all training windows must share T")
    fs = windows[0].fs
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    trace: list[TraceRow] = []
    for step, idx in enumerate(_batches(len(windows), cfg, rng), start=1):
        maps = np.stack([augment_mstmap(windows[i], cfg.augment, rng)[0].data for i in idx])
        L, grads = selfsup_batch_loss(params, model_cfg, maps, fs, loss_cfg)
        trace.append(TraceRow(step, "total", L.value))
        trace.extend(TraceRow(step, k, v) for k, v in L.parts.items())
        params, state = _step(params, grads, state, cfg)
        if step % 50 == 0:
            log.info("selfsup step %d total %.5f", step, L.value)
    return params, trace


def finetune_stformer(
    windows: Sequence[MstMap],
    labels: Sequence[Waveform],
    params: dict,
    model_cfg: stformer.ModelConfig,
    cfg: TrainConfig = TrainConfig(lr=1e-5),
    loss_cfg: losses.LossConfig = losses.LossConfig(),
) -> tuple[dict, list[TraceRow]]:
    """Self-supervised total plus negative Pearson against aligned PPG labels."""
    if len(windows) != len(labels):
        raise InvalidArgument("need one label waveform per window")
    if not windows:
        return params, []
    T = windows[0].T
    if any(w.T != T for w in windows) or any(len(y) != T for y in labels):
        raise InvalidArgument("labels must be aligned to windows (same T)")
    fs = windows[0].fs
    gts = np.stack([y.samples for y in labels])
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    trace: list[TraceRow] = []
    for step, idx in enumerate(_batches(len(windows), cfg, rng), start=1):
        maps = []
        gt = []
        for i in idx:
            m = windows[i]
            g = gts[i]
            if cfg.augment.flip_time and rng.random() < 0.5:
                m = MstMap(m.data[::-1], m.fs, m.meta_roi_count)
                g = g[::-1]
            if cfg.augment.flip_roi and rng.random() < 0.5:
                m = MstMap(m.data[:, ::-1], m.fs, m.meta_roi_count)
            maps.append(m.data)
            gt.append(g)
        maps = np.stack(maps)
        gt = np.stack(gt)
        y, cache = stformer.forward_batch(params, model_cfg, maps)
        z = standardize_array(y)
        L = losses.selfsup_terms(z, fs, loss_cfg)
        vp, gp = losses.pearson_terms(z, gt)
        pear = float(vp.mean())
        gz = cfg.selfsup_weight * L.grad + cfg.pearson_weight * gp / len(idx)
        grads, _ = stformer.backward_batch(params, model_cfg, cache, standardize_vjp(z, y, gz))
        total = cfg.selfsup_weight * L.value + cfg.pearson_weight * pear
        trace += [TraceRow(step, "total", total), TraceRow(step, "selfsup", L.value), TraceRow(step, "pear", pear)]
        params, state = _step(params, grads, state, cfg)
    return params, trace


# ------------------------------------------------------------------- solution 2


def prepare_clip(clip: VideoCube | np.ndarray, mode: str = "temporal") -> np.ndarray:
    """Encoder input: ``temporal`` removes each pixel's temporal mean and rescales
    by the clip's global std; ``diff`` uses normalized frame differences."""
    from pulseforge.signalcore import frame_diff

    frames = clip.frames if isinstance(clip, VideoCube) else np.asarray(clip, dtype=np.float64)
    if mode == "diff":
        return frame_diff(VideoCube(frames)).frames.copy()
    if mode != "temporal":
        raise InvalidArgument(f"unknown clip input mode {mode!r}")
    x = frames - frames.mean(axis=0, keepdims=True)
    sd = x.std()
    return x / sd if sd > 1e-12 else x


@dataclass(frozen=True)
class ContrastConfig:
    delta_t: int = 150
    n_offsets: int = 2
    input_mode: str = "temporal"


def _block_psds(params, enc_cfg, clip, fs, delta_t, n_offsets, rng, band):
    out, cache = stencoder.forward(params, enc_cfg, clip)
    n_cells = out.shape[1] * out.shape[2]
    offs = stencoder.draw_offsets(out.shape[0], delta_t, n_cells, n_offsets, rng)
    rows = stencoder.slice_block(out, offs, delta_t)
    F, pcache = losses.band_psd(rows, fs, band)
    return F, (out.shape, cache, offs, pcache)


def _block_backward(params, enc_cfg, bundle, gF, delta_t):
    shape, cache, offs, pcache = bundle
    g_rows = losses.band_psd_backward(pcache, gF)
    g_out = stencoder.slice_block_backward(shape, offs, delta_t, g_rows)
    grads, _ = stencoder.backward(params, enc_cfg, cache, g_out)
    return grads


def _add(a: dict, b: dict) -> dict:
    return {k: a[k] + b[k] for k in a}


def pretrain_contrastive(
    clips: Sequence[VideoCube],
    params: dict,
    enc_cfg: stencoder.EncoderConfig,
    cfg: TrainConfig = TrainConfig(batch_size=2),
    ccfg: ContrastConfig = ContrastConfig(),
    loss_cfg: losses.LossConfig = losses.LossConfig(),
) -> tuple[dict, list[TraceRow]]:
    """Each step draws two clips, pulls ST-rPPG samples of a clip together and pushes the clips apart."""
    if len(clips) < 2:
        raise InvalidArgument("contrastive pretraining needs at least 2 clips")
    fs = clips[0].fs
    inputs = [prepare_clip(c, ccfg.input_mode) for c in clips]
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    trace: list[TraceRow] = []
    two = TrainConfig(**{**cfg.__dict__, "batch_size": 2})
    for step, idx in enumerate(_batches(len(clips), two, rng, min_batch=2), start=1):
        a, b = int(idx[0]), int(idx[1])
        Fa, ba = _block_psds(params, enc_cfg, inputs[a], fs, ccfg.delta_t, ccfg.n_offsets, rng, loss_cfg.band)
        Fb, bb = _block_psds(params, enc_cfg, inputs[b], fs, ccfg.delta_t, ccfg.n_offsets, rng, loss_cfg.band)
        L = losses.contrastive_pretrain_loss(Fa, Fb)
        grads = _add(
            _block_backward(params, enc_cfg, ba, L.grad["a"], ccfg.delta_t),
            _block_backward(params, enc_cfg, bb, L.grad["b"], ccfg.delta_t),
        )
        trace += [TraceRow(step, "ctr", L.value), TraceRow(step, "pos", L.parts["pos"]), TraceRow(step, "neg", L.parts["neg"])]
        params, state = _step(params, grads, state, cfg)
        if step % 50 == 0:
            log.info("contrastive step %d ctr %.5f", step, L.value)
    return params, trace


def finetune_stencoder(
    clips: Sequence[VideoCube],
    labels: Sequence[Waveform],
    params: dict,
    enc_cfg: stencoder.EncoderConfig,
    cfg: TrainConfig = TrainConfig(lr=1e-5, batch_size=2),
    ccfg: ContrastConfig = ContrastConfig(),
    loss_cfg: losses.LossConfig = losses.LossConfig(),
) -> tuple[dict, list[TraceRow]]:
    """Supervised contrast against PPG PSDs plus weighted Pearson and MCC on the spatial average."""
    if len(clips) != len(labels):
        raise InvalidArgument("need one label waveform per clip")
    if any(c.frames.shape[0] != len(y) for c, y in zip(clips, labels)):
        raise InvalidArgument("labels must be aligned to clips (same T)")
    if not clips:
        return params, []
    fs = clips[0].fs
    inputs = [prepare_clip(c, ccfg.input_mode) for c in clips]
    gts = [y.samples for y in labels]
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    trace: list[TraceRow] = []
    two = TrainConfig(**{**cfg.__dict__, "batch_size": 2})
    for step, idx in enumerate(_batches(len(clips), two, rng, min_batch=2), start=1):
        fwd = []
        for i in idx:
            out, cache = stencoder.forward(params, enc_cfg, inputs[i])
            n_cells = out.shape[1] * out.shape[2]
            offs = stencoder.draw_offsets(out.shape[0], ccfg.delta_t, n_cells, ccfg.n_offsets, rng)
            rows = stencoder.slice_block(out, offs, ccfg.delta_t)
            F, pc = losses.band_psd(rows, fs, loss_cfg.band)
            gt_rows = np.stack([gts[i][o : o + ccfg.delta_t] for c in range(n_cells) for o in offs[c]])
            G, _ = losses.band_psd(gt_rows, fs, loss_cfg.band)
            fwd.append((out, cache, offs, F, pc, G))
        (oa, ca, offa, Fa, pca, Ga), (ob, cb, offb, Fb, pcb, Gb) = fwd
        ya = Waveform(oa.mean(axis=(1, 2)), fs)
        yb = Waveform(ob.mean(axis=(1, 2)), fs)
        L = losses.finetune_loss(Fa, Fb, Ga, Gb, [ya, yb], [Waveform(gts[idx[0]], fs), Waveform(gts[idx[1]], fs)], loss_cfg)
        grads = None
        for (out, cache, offs, F, pc, G), gF, gy in zip(fwd, (L.grad["pred_a"], L.grad["pred_b"]), L.grad["y_pred"]):
            g_out = stencoder.slice_block_backward(out.shape, offs, ccfg.delta_t, losses.band_psd_backward(pc, gF))
            g_out = g_out + gy[:, None, None] / (out.shape[1] * out.shape[2])
            g, _ = stencoder.backward(params, enc_cfg, cache, g_out)
            grads = g if grads is None else _add(grads, g)
        trace.append(TraceRow(step, "total", L.value))
        trace.extend(TraceRow(step, k, v) for k, v in L.parts.items())
        params, state = _step(params, grads, state, cfg)
    return params, trace
