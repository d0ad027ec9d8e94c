"""Small spatiotemporal encoder producing an ST-rPPG block from a video clip.

Stages of (3-frame temporal mixing + per-pixel channel mixing, tanh, 2x2
spatial average pooling), then block-average pooling to S x S cells and a
linear 1-channel head. Temporal length is preserved throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pulseforge.errors import InvalidArgument
from pulseforge.signalcore import Waveform


@dataclass(frozen=True)
class EncoderConfig:
    S_sp: int = 2
    width: int = 8
    stages: int = 3
    C_in: int = 3

    def __post_init__(self):
        if self.S_sp < 1 or self.width < 1 or self.stages < 1 or self.C_in < 1:
            raise InvalidArgument("S_sp, width, stages and C_in must all be >= 1")


@dataclass(frozen=True, eq=False)
class STBlock:
    values: np.ndarray  # T x S x S
    fs: float = 30.0

    @property
    def S_sp(self) -> int:
        return self.values.shape[1]


def init_params(cfg: EncoderConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    p = {}
    cin = cfg.C_in
    for k in range(cfg.stages):
        bound = 1.0 / np.sqrt(3 * cin)
        p[f"stage{k}.w"] = rng.uniform(-bound, bound, size=(3, cin, cfg.width))
        p[f"stage{k}.b"] = np.zeros(cfg.width)
        cin = cfg.width
    bound = 1.0 / np.sqrt(cin)
    p["head.w"] = rng.uniform(-bound, bound, size=cin)
    p["head.b"] = np.zeros(1)
    return p


def _halve(h: int, w: int, S: int) -> bool:
    return h % 2 == 0 and w % 2 == 0 and (h // 2) % S == 0 and (w // 2) % S == 0


def _temporal_mix(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # y[t] = x[t-1] w[0] + x[t] w[1] + x[t+1] w[2] + b, zero padded in time
    y = x @ w[1] + b
    y[1:] += x[:-1] @ w[0]
    y[:-1] += x[1:] @ w[2]
    return y


def forward(params: dict, cfg: EncoderConfig, clip: np.ndarray):
    """(T, H, W, C) clip -> ((T, S, S) block, cache)."""
    x = np.asarray(clip, dtype=np.float64)
    if x.ndim != 4 or x.shape[-1] != cfg.C_in:
        raise InvalidArgument(f"clip must be T x H x W x {cfg.C_in}, got {x.shape}")
    T, H, W, _ = x.shape
    S = cfg.S_sp
    if H % S or W % S:
        raise InvalidArgument(f"spatial size {H}x{W} not divisible by S={S}")
    caches = []
    for k in range(cfg.stages):
        a = np.tanh(_temporal_mix(x, params[f"stage{k}.w"], params[f"stage{k}.b"]))
        h, w = a.shape[1:3]
        pooled = _halve(h, w, S)
        caches.append((x, a, pooled))
        if pooled:
            a = a.reshape(T, h // 2, 2, w // 2, 2, -1).mean(axis=(2, 4))
        x = a
    h, w = x.shape[1:3]
    cells = x.reshape(T, S, h // S, S, w // S, -1).mean(axis=(2, 4))
    out = cells @ params["head.w"] + params["head.b"][0]
    return out, (caches, x, cells)


def backward(params: dict, cfg: EncoderConfig, cache, gout: np.ndarray):
    """Returns (param grads, grad wrt clip) for upstream (T, S, S) gradient."""
    caches, xlast, cells = cache
    S = cfg.S_sp
    g = {"head.w": np.einsum("tijc,tij->c", cells, gout), "head.b": np.array([gout.sum()])}
    gcells = gout[..., None] * params["head.w"]
    T, h, w, C = xlast.shape
    gx = np.broadcast_to(
        gcells[:, :, None, :, None, :] / ((h // S) * (w // S)), (T, S, h // S, S, w // S, C)
    ).reshape(T, h, w, C)
    for k in reversed(range(cfg.stages)):
        xin, a, pooled = caches[k]
        if pooled:
            hh, ww = a.shape[1:3]
            ga = np.broadcast_to(
                gx[:, :, None, :, None, :] / 4.0, (T, hh // 2, 2, ww // 2, 2, a.shape[-1])
            ).reshape(a.shape)
        else:
            ga = gx
        gy = ga * (1.0 - a**2)
        wk = params[f"stage{k}.w"]
        gw = np.zeros_like(wk)
        gw[1] = np.einsum("thwc,thwd->cd", xin, gy)
        gw[0] = np.einsum("thwc,thwd->cd", xin[:-1], gy[1:])
        gw[2] = np.einsum("thwc,thwd->cd", xin[1:], gy[:-1])
        g[f"stage{k}.w"] = gw
        g[f"stage{k}.b"] = gy.sum(axis=(0, 1, 2))
        gx = gy @ wk[1].T
        gx[:-1] += gy[1:] @ wk[0].T
        gx[1:] += gy[:-1] @ wk[2].T
    return g, gx


def st_encoder_forward(clip, params: dict, cfg: EncoderConfig = EncoderConfig()) -> STBlock:
    frames = clip.frames if hasattr(clip, "frames") else clip
    fs = getattr(clip, "fs", 30.0)
    out, _ = forward(params, cfg, frames)
    return STBlock(out, fs)


def st_encoder_backward(clip, params: dict, cfg: EncoderConfig, upstream_grad):
    frames = clip.frames if hasattr(clip, "frames") else clip
    out, cache = forward(params, cfg, frames)
    gout = np.asarray(upstream_grad, dtype=np.float64)
    if gout.shape != out.shape:
        raise InvalidArgument(f"upstream gradient shape {gout.shape} != block shape {out.shape}")
    return backward(params, cfg, cache, gout)


# ------------------------------------------------------------ block sampling


def draw_offsets(T: int, delta_t: int, n_cells: int, n_offsets: int, rng_seed) -> np.ndarray:
    """Start frames, shape (n_cells, n_offsets), uniform on [0, T - delta_t]."""
    if delta_t > T:
        raise InvalidArgument(f"delta_t={delta_t} exceeds block length {T}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.integers(0, T - delta_t + 1, size=(n_cells, n_offsets))


def slice_block(values: np.ndarray, offsets: np.ndarray, delta_t: int) -> np.ndarray:
    """Rows ordered cell-major (cell 0 offsets first); cells in row-major (i, j) order."""
    T = values.shape[0]
    flat = values.reshape(T, -1)
    rows = [flat[o : o + delta_t, c] for c in range(flat.shape[1]) for o in offsets[c]]
    return np.stack(rows)


def slice_block_backward(shape, offsets: np.ndarray, delta_t: int, g_rows: np.ndarray) -> np.ndarray:
    T = shape[0]
    g = np.zeros((T, int(np.prod(shape[1:]))))
    r = 0
    for c in range(g.shape[1]):
        for o in offsets[c]:
            g[o : o + delta_t, c] += g_rows[r]
            r += 1
    return g.reshape(shape)


def sample_st_rppg(block: STBlock, delta_t: int = 150, n_offsets: int = 1, rng_seed=0) -> list[Waveform]:
    vals = block.values
    offsets = draw_offsets(vals.shape[0], delta_t, vals.shape[1] * vals.shape[2], n_offsets, rng_seed)
    return [Waveform(r, block.fs) for r in slice_block(vals, offsets, delta_t)]


def spatial_average(block: STBlock) -> Waveform:
    return Waveform(block.values.mean(axis=(1, 2)), block.fs)
