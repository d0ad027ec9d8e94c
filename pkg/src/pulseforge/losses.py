"""Frequency-domain training objectives with analytic gradients.

Self-supervised terms (bandwidth, sparsity, variance, periodicity) act on
predicted waveforms. Contrastive terms act on in-band PSDs normalized to
unit sum; :func:`band_psd` / :func:`band_psd_backward` chain them to time
samples. Stop-gradient is applied to the spectral peak index and to the
cross-correlation lag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from pulseforge.errors import DegenerateInput, InvalidArgument
from pulseforge.signalcore import (
    BandLimits,
    Spectrum,
    Waveform,
    default_nfft,
    power_spectrum,
    power_spectrum_vjp,
)

TINY = 1e-20


@dataclass(frozen=True)
class LossConfig:
    band: BandLimits = BandLimits()
    delta_f_bins: int = 6
    n_segments: int = 3
    alpha: float = 0.1
    beta: float = 0.2
    n_fft: int | None = None  # None -> signalcore default grid

    def __post_init__(self):
        if self.delta_f_bins < 1:
            raise InvalidArgument("delta_f_bins must be >= 1")
        if self.n_segments < 2:
            raise InvalidArgument("n_segments must be >= 2")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgument("alpha and beta must be non-negative")

    def nfft_for(self, length: int) -> int:
        return default_nfft(length) if self.n_fft is None else self.n_fft


@dataclass
class LossValue:
    value: float
    grad: Any  # ndarray, or dict of ndarrays for multi-input losses
    parts: dict[str, float] = field(default_factory=dict)


def _batch(ys: Waveform | Sequence[Waveform]) -> tuple[np.ndarray, float]:
    if isinstance(ys, Waveform):
        ys = [ys]
    if len(ys) == 0:
        raise InvalidArgument("empty batch")
    fs = ys[0].fs
    T = len(ys[0])
    if any(len(y) != T or y.fs != fs for y in ys):
        raise InvalidArgument("batch members must share length and sampling rate")
    return np.stack([y.samples for y in ys]), fs


def _inband(n_fft: int, fs: float, band: BandLimits) -> np.ndarray:
    band.check(fs)
    freqs = np.arange(n_fft // 2 + 1) * fs / n_fft
    idx = np.flatnonzero(band.mask(freqs))
    if idx.size < 2:
        raise InvalidArgument("band covers fewer than 2 PSD bins")
    return idx


# ------------------------------------------------------------- bandwidth / sparsity


def bandwidth_terms(x: np.ndarray, fs: float, cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-row out-of-band power fraction and its gradient (rows of ``x``)."""
    n_fft = cfg.nfft_for(x.shape[-1])
    P, X = power_spectrum(x, n_fft)
    out = np.ones(P.shape[-1], dtype=bool)
    out[_inband(n_fft, fs, cfg.band)] = False
    total = P.sum(axis=-1, keepdims=True)
    if np.any(total < TINY):
        raise DegenerateInput("signal has (near) zero total power")
    v = P[..., out].sum(axis=-1, keepdims=True) / total
    gP = (out[None, :] - v) / total
    return v[..., 0], power_spectrum_vjp(X, gP, x.shape[-1])


def bandwidth_loss(y: Waveform, cfg: LossConfig = LossConfig()) -> LossValue:
    v, g = bandwidth_terms(y.samples[None], y.fs, cfg)
    return LossValue(float(v[0]), g[0])


def sparsity_terms(x: np.ndarray, fs: float, cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-row in-band power at least ``delta_f_bins`` away from the in-band peak, as a fraction."""
    n_fft = cfg.nfft_for(x.shape[-1])
    P, X = power_spectrum(x, n_fft)
    idx = _inband(n_fft, fs, cfg.band)
    Pin = P[..., idx]
    S = Pin.sum(axis=-1, keepdims=True)
    if np.any(S < TINY):
        raise DegenerateInput("signal has (near) zero in-band power")
    peak = np.argmax(Pin, axis=-1)[:, None]
    far = np.abs(np.arange(idx.size)[None, :] - peak) >= cfg.delta_f_bins
    v = (Pin * far).sum(axis=-1, keepdims=True) / S
    gP = np.zeros_like(P)
    gP[..., idx] = (far - v) / S
    return v[..., 0], power_spectrum_vjp(X, gP, x.shape[-1])


def sparsity_loss(y: Waveform, cfg: LossConfig = LossConfig()) -> LossValue:
    v, g = sparsity_terms(y.samples[None], y.fs, cfg)
    return LossValue(float(v[0]), g[0])


# ------------------------------------------------------------------------ variance


def variance_terms(x: np.ndarray, fs: float, cfg: LossConfig) -> tuple[float, np.ndarray]:
    n_fft = cfg.nfft_for(x.shape[-1])
    P, X = power_spectrum(x, n_fft)
    idx = _inband(n_fft, fs, cfg.band)
    d = idx.size
    S = P[..., idx].sum(axis=0)
    tot = S.sum()
    if tot < TINY:
        raise DegenerateInput("batch has (near) zero in-band power")
    Q = S / tot
    diff = np.cumsum(Q) - np.arange(1, d + 1) / d
    value = float(np.mean(diff**2))
    gQ = (2.0 / d) * np.cumsum(diff[::-1])[::-1]
    gS = (gQ - np.dot(gQ, Q)) / tot
    gP = np.zeros_like(P)
    gP[..., idx] = gS[None, :]
    return value, power_spectrum_vjp(X, gP, x.shape[-1])


def variance_loss(batch: Sequence[Waveform], cfg: LossConfig = LossConfig()) -> LossValue:
    x, fs = _batch(batch)
    v, g = variance_terms(x, fs, cfg)
    return LossValue(v, g)


# --------------------------------------------------------------------- periodicity


def periodicity_terms(x: np.ndarray, fs: float, cfg: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    S = cfg.n_segments
    B, T = x.shape
    if T < 8 * S:
        raise InvalidArgument(f"signal of length {T} too short for {S} segments")
    L = T // S
    segs = x[:, : S * L].reshape(B, S, L)
    n_fft = cfg.nfft_for(L)
    P, X = power_spectrum(segs, n_fft)
    idx = _inband(n_fft, fs, cfg.band)
    U = P[..., idx]
    tot = U.sum(axis=-1, keepdims=True)
    if np.any(tot < TINY):
        raise DegenerateInput("a segment has (near) zero in-band power")
    F = U / tot
    D = F[:, :-1] - F[:, 1:]
    v = (D**2).sum(axis=(1, 2))
    gF = np.zeros_like(F)
    gF[:, :-1] += 2 * D
    gF[:, 1:] -= 2 * D
    gU = (gF - (gF * F).sum(axis=-1, keepdims=True)) / tot
    gP = np.zeros_like(P)
    gP[..., idx] = gU
    gseg = power_spectrum_vjp(X, gP, L)
    g = np.zeros_like(x)
    g[:, : S * L] = gseg.reshape(B, S * L)
    return v, g


def periodicity_loss(y: Waveform, cfg: LossConfig = LossConfig()) -> LossValue:
    v, g = periodicity_terms(y.samples[None], y.fs, cfg)
    return LossValue(float(v[0]), g[0])


# --------------------------------------------------------------------------- total


def selfsup_terms(x: np.ndarray, fs: float, cfg: LossConfig) -> LossValue:
    """Batch objective on a (B, T) array; grad has shape (B, T)."""
    B = x.shape[0]
    vb, gb = bandwidth_terms(x, fs, cfg)
    vs, gs = sparsity_terms(x, fs, cfg)
    vp, gp = periodicity_terms(x, fs, cfg)
    vv, gv = variance_terms(x, fs, cfg)
    parts = {
        "band": float(vb.mean()),
        "sparse": float(vs.mean()),
        "var": vv,
        "perio": float(vp.mean()),
    }
    value = parts["band"] + parts["sparse"] + parts["var"] + parts["perio"]
    grad = (gb + gs + gp) / B + gv
    return LossValue(value, grad, parts)


def total_selfsup_loss(batch: Sequence[Waveform], cfg: LossConfig = LossConfig()) -> LossValue:
    x, fs = _batch(batch)
    return selfsup_terms(x, fs, cfg)


# -------------------------------------------------------------- PSDs for contrast


def band_psd(x: np.ndarray, fs: float, band: BandLimits = BandLimits(), n_fft: int | None = None):
    """In-band PSD rows normalized to unit sum. Returns ``(F, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    n_fft = default_nfft(x.shape[-1]) if n_fft is None else n_fft
    P, X = power_spectrum(x, n_fft)
    idx = _inband(n_fft, fs, band)
    U = P[..., idx]
    tot = U.sum(axis=-1, keepdims=True)
    if np.any(tot < TINY):
        raise DegenerateInput("signal has (near) zero in-band power")
    F = U / tot
    return F, (X, idx, F, tot, x.shape[-1])


def band_psd_backward(cache, gF: np.ndarray) -> np.ndarray:
    X, idx, F, tot, length = cache
    gU = (gF - (gF * F).sum(axis=-1, keepdims=True)) / tot
    gP = np.zeros(X.shape[:-1] + (X.shape[-1] // 2 + 1,))
    gP[..., idx] = gU
    return power_spectrum_vjp(X, gP, length)


def _psd_rows(psds) -> np.ndarray:
    if isinstance(psds, np.ndarray):
        return np.asarray(psds, dtype=np.float64)
    rows = [p.powers if isinstance(p, Spectrum) else np.asarray(p, dtype=np.float64) for p in psds]
    return np.stack(rows)


def _pair_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # squared distances between every row of a and every row of b
    d = a[:, None, :] - b[None, :, :]
    return (d**2).sum(axis=-1)


def contrastive_pretrain_loss(psds_a, psds_b) -> LossValue:
    """Pull PSDs of one video together, push the two videos' PSDs apart."""
    f = _psd_rows(psds_a)
    fp = _psd_rows(psds_b)
    if f.shape != fp.shape:
        raise InvalidArgument(f"PSD sets differ in shape: {f.shape} vs {fp.shape}")
    N = f.shape[0]
    if N < 2:
        raise InvalidArgument("contrastive loss needs at least 2 PSDs per video")
    pos = (_pair_sq(f, f).sum() + _pair_sq(fp, fp).sum()) / (2 * N * (N - 1))
    neg = -_pair_sq(f, fp).sum() / N**2
    # d/df_i of the within-video term counts both (i, j) and (j, i)
    ga = 2 * (N * f - f.sum(0)) / (N * (N - 1))
    gb = 2 * (N * fp - fp.sum(0)) / (N * (N - 1))
    ga -= 2 * (N * f - fp.sum(0)) / N**2
    gb -= 2 * (N * fp - f.sum(0)) / N**2
    return LossValue(float(pos + neg), {"a": ga, "b": gb}, {"pos": float(pos), "neg": float(neg)})


def supervised_contrastive_loss(pred_psds, pred_psds_other, gt_psds, gt_psds_other) -> LossValue:
    """Prediction-vs-ground-truth contrast: same-video pairs pulled, cross-video pairs pushed."""
    f, fp, g, gp = (_psd_rows(p) for p in (pred_psds, pred_psds_other, gt_psds, gt_psds_other))
    if not (f.shape == fp.shape == g.shape == gp.shape):
        raise InvalidArgument("all four PSD sets must share shape")
    N = f.shape[0]
    if N < 2:
        raise InvalidArgument("supervised contrastive loss needs at least 2 PSDs per video")
    off = ~np.eye(N, dtype=bool)
    pos = (_pair_sq(f, g)[off].sum() + _pair_sq(fp, gp)[off].sum()) / (2 * N * (N - 1))
    neg = -(_pair_sq(f, gp).sum() + _pair_sq(fp, g).sum()) / N**2

    def pull(u, v):
        # d/du_i sum_{j != i} |u_i - v_j|^2
        return 2 * ((N - 1) * u - (v.sum(0) - v))

    def push(u, v):
        return 2 * (N * u - v.sum(0))

    c = 2 * N * (N - 1)
    grads = {
        "pred_a": pull(f, g) / c - push(f, gp) / N**2,
        "pred_b": pull(fp, gp) / c - push(fp, g) / N**2,
        "gt_a": pull(g, f) / c - push(g, fp) / N**2,
        "gt_b": pull(gp, fp) / c - push(gp, f) / N**2,
    }
    return LossValue(float(pos + neg), grads, {"pos": float(pos), "neg": float(neg)})


# ------------------------------------------------------------- supervised losses


def pearson_terms(p: np.ndarray, g: np.ndarray, mode: str = "one_minus") -> tuple[np.ndarray, np.ndarray]:
    """Row-wise negative Pearson; ``mode`` is ``one_minus`` (1 - r) or ``neg`` (-r)."""
    a = p - p.mean(axis=-1, keepdims=True)
    b = g - g.mean(axis=-1, keepdims=True)
    na = np.sqrt((a * a).sum(axis=-1, keepdims=True))
    nb = np.sqrt((b * b).sum(axis=-1, keepdims=True))
    T = p.shape[-1]
    if np.any(na**2 / T < 1e-12) or np.any(nb**2 / T < 1e-12):
        raise DegenerateInput("Pearson correlation undefined for zero-variance input")
    r = (a * b).sum(axis=-1, keepdims=True) / (na * nb)
    dr = b / (na * nb) - r * a / na**2
    base = 1.0 if mode == "one_minus" else 0.0
    if mode not in ("one_minus", "neg"):
        raise InvalidArgument(f"unknown Pearson mode {mode!r}")
    return base - r[..., 0], -dr


def pearson_loss(y_pred: Waveform, y_gt: Waveform, mode: str = "one_minus") -> LossValue:
    if len(y_pred) != len(y_gt):
        raise InvalidArgument("prediction and ground truth differ in length")
    v, g = pearson_terms(y_pred.samples[None], y_gt.samples[None], mode)
    return LossValue(float(v[0]), g[0])


def two_sided_band_mask(T: int, fs: float, band: BandLimits) -> np.ndarray:
    k = np.arange(T)
    f = np.minimum(k, T - k) * fs / T
    return band.mask(f).astype(np.float64)


def mcc_terms(p: np.ndarray, g: np.ndarray, fs: float, band: BandLimits) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise negative max normalized circular cross-correlation (band-limited)."""
    band.check(fs)
    T = p.shape[-1]
    sp = p.std(axis=-1, keepdims=True)
    sg = g.std(axis=-1, keepdims=True)
    if np.any(sp < 1e-6) or np.any(sg < 1e-6):
        raise DegenerateInput("cross-correlation undefined for zero-variance input")
    M = two_sided_band_mask(T, fs, band)
    # circular, length-T transforms; numpy handles non power-of-two T
    Pf = np.fft.fft(p, axis=-1)
    Gf = np.fft.fft(g, axis=-1)
    xc = np.real(np.fft.ifft(Pf * M * np.conj(Gf), axis=-1))
    lag = np.argmax(xc, axis=-1)
    c = np.take_along_axis(xc, lag[:, None], axis=-1)
    denom = T * sp * sg
    value = -c / denom
    # d c / d p = H roll(g, lag), H the (symmetric) band-limiting operator
    rolled = np.stack([np.roll(g[i], lag[i]) for i in range(g.shape[0])])
    dc = np.real(np.fft.ifft(np.fft.fft(rolled, axis=-1) * M, axis=-1))
    dsp = (p - p.mean(axis=-1, keepdims=True)) / (T * sp)
    grad = -dc / denom + c / (T * sp**2 * sg) * dsp
    return value[..., 0], grad


def mcc_loss(y_pred: Waveform, y_gt: Waveform, band: BandLimits = BandLimits()) -> LossValue:
    if len(y_pred) != len(y_gt):
        raise InvalidArgument("prediction and ground truth differ in length")
    v, g = mcc_terms(y_pred.samples[None], y_gt.samples[None], y_pred.fs, band)
    return LossValue(float(v[0]), g[0])


def finetune_loss(
    pred_psds_a,
    pred_psds_b,
    gt_psds_a,
    gt_psds_b,
    y_pred: Sequence[Waveform],
    y_gt: Sequence[Waveform],
    cfg: LossConfig = LossConfig(),
    pearson_mode: str = "one_minus",
) -> LossValue:
    """Supervised contrast + alpha * Pearson + beta * MCC.

    Pearson and MCC are averaged over the supplied (prediction, truth)
    waveform pairs; ``grad['y_pred']`` has one row per pair.
    """
    ctr = supervised_contrastive_loss(pred_psds_a, pred_psds_b, gt_psds_a, gt_psds_b)
    p, fs = _batch(y_pred)
    g, _ = _batch(y_gt)
    if p.shape != g.shape:
        raise InvalidArgument("prediction and ground-truth waveforms differ in shape")
    n = p.shape[0]
    vp, gp = pearson_terms(p, g, pearson_mode)
    vm, gm = mcc_terms(p, g, fs, cfg.band)
    pear, mcc = float(vp.mean()), float(vm.mean())
    value = ctr.value + cfg.alpha * pear + cfg.beta * mcc
    grads = dict(ctr.grad)
    grads["y_pred"] = (cfg.alpha * gp + cfg.beta * gm) / n
    parts = {"pos_gt": ctr.parts["pos"], "neg_gt": ctr.parts["neg"], "pear": pear, "mcc": mcc}
    return LossValue(value, grads, parts)
