"""Spatial-temporal transformer mapping an MSTmap window to an rPPG waveform.

Each encoder is single-head attention with a residual, followed by an
LN -> MLP branch with a second residual::

    Z  = softmax(X Wq (X Wk)^T / sqrt(D)) X Wv + X
    Z' = MLP(LN(Z)) + Z

The spatial encoder attends over the N ROI tokens of each frame, the
temporal encoder over the T frames of each ROI. Loops alternate spatial then
temporal. Positional tables are added once, before the first loop. The head
averages ROI tokens and applies an affine D -> 1 map.

Parameters live in a flat ``dict[str, ndarray]``; gradients come back in a
dict with the same keys.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pulseforge.errors import InvalidArgument

LN_EPS = 1e-5
BLOCK_KEYS = ("wq", "wk", "wv", "ln_g", "ln_b", "w1", "b1", "w2", "b2")
PRE_LN_KEYS = ("ln0_g", "ln0_b")


@dataclass(frozen=True)
class ModelConfig:
    D: int = 128
    L: int = 6
    N: int = 63
    T: int = 300
    C: int = 6
    mlp_hidden: int | None = None
    pre_ln: bool = False
    ln_bypass: bool = False  # diagnostic: skip LN inside the MLP branch

    def __post_init__(self):
        if self.D < 4 or self.D % 2:
            raise InvalidArgument(f"D must be even and >= 4, got {self.D}")
        if self.L < 1 or self.N < 1 or self.T < 1 or self.C < 1:
            raise InvalidArgument("L, N, T and C must all be >= 1")

    @property
    def hidden(self) -> int:
        return self.mlp_hidden or 2 * self.D


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)

    def fan_in(*shape):
        bound = 1.0 / np.sqrt(shape[0])
        return rng.uniform(-bound, bound, size=shape)

    D, H = cfg.D, cfg.hidden
    p = {
        "embed.w": fan_in(cfg.C, D),
        "embed.b": np.zeros(D),
        "pos.spatial": rng.uniform(-0.02, 0.02, size=(cfg.N, D)),
        "pos.temporal": rng.uniform(-0.02, 0.02, size=(cfg.T, D)),
    }
    for l in range(cfg.L):
        for kind in ("spatial", "temporal"):
            pre = f"loop{l}.{kind}."
            if cfg.pre_ln:
                p[pre + "ln0_g"] = np.ones(D)
                p[pre + "ln0_b"] = np.zeros(D)
            p[pre + "wq"] = fan_in(D, D)
            p[pre + "wk"] = fan_in(D, D)
            p[pre + "wv"] = fan_in(D, D)
            p[pre + "ln_g"] = np.ones(D)
            p[pre + "ln_b"] = np.zeros(D)
            p[pre + "w1"] = fan_in(D, H)
            p[pre + "b1"] = np.zeros(H)
            p[pre + "w2"] = fan_in(H, D)
            p[pre + "b2"] = np.zeros(D)
    p["head.w"] = fan_in(D)
    p["head.b"] = np.zeros(1)
    return p


def block_params(params: dict, loop: int, kind: str) -> dict[str, np.ndarray]:
    pre = f"loop{loop}.{kind}."
    return {k[len(pre) :]: v for k, v in params.items() if k.startswith(pre)}


# ------------------------------------------------------------------ primitives


def layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv, g)


def layer_norm_backward(gy, cache):
    xhat, inv, g = cache
    gxhat = gy * g
    gx = inv * (gxhat - gxhat.mean(-1, keepdims=True) - xhat * (gxhat * xhat).mean(-1, keepdims=True))
    red = tuple(range(gy.ndim - 1))
    return gx, (gy * xhat).sum(red), gy.sum(red)


def softmax(s):
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------- encoder


def encoder_block(X: np.ndarray, bp: dict, pre_ln: bool = False, ln_bypass: bool = False):
    """One encoder on (B, S, D) tokens, attending over axis 1. Returns (out, cache)."""
    D = X.shape[-1]
    if pre_ln:
        U, ln0 = layer_norm(X, bp["ln0_g"], bp["ln0_b"])
    else:
        U, ln0 = X, None
    Q = U @ bp["wq"]
    K = U @ bp["wk"]
    V = U @ bp["wv"]
    A = softmax(Q @ K.transpose(0, 2, 1) / np.sqrt(D))
    Z = A @ V + X
    if ln_bypass:
        Hn, ln = Z, None
    else:
        Hn, ln = layer_norm(Z, bp["ln_g"], bp["ln_b"])
    Hh = np.tanh(Hn @ bp["w1"] + bp["b1"])
    out = Hh @ bp["w2"] + bp["b2"] + Z
    return out, (U, Q, K, V, A, Hn, Hh, ln, ln0, pre_ln, ln_bypass)


def encoder_block_backward(gout: np.ndarray, bp: dict, cache):
    U, Q, K, V, A, Hn, Hh, ln, ln0, pre_ln, ln_bypass = cache
    D = U.shape[-1]
    red = (0, 1)
    g = {}
    gZ = gout.copy()
    g["b2"] = gout.sum(red)
    g["w2"] = np.einsum("bsh,bsd->hd", Hh, gout)
    gM1 = (gout @ bp["w2"].T) * (1.0 - Hh**2)
    g["b1"] = gM1.sum(red)
    g["w1"] = np.einsum("bsd,bsh->dh", Hn, gM1)
    gHn = gM1 @ bp["w1"].T
    if ln_bypass:
        gZ += gHn
        g["ln_g"] = np.zeros_like(bp["ln_g"])
        g["ln_b"] = np.zeros_like(bp["ln_b"])
    else:
        gz_ln, g["ln_g"], g["ln_b"] = layer_norm_backward(gHn, ln)
        gZ += gz_ln
    gX = gZ.copy()
    gV = A.transpose(0, 2, 1) @ gZ
    gA = gZ @ V.transpose(0, 2, 1)
    gS = A * (gA - (gA * A).sum(-1, keepdims=True)) / np.sqrt(D)
    gQ = gS @ K
    gK = gS.transpose(0, 2, 1) @ Q
    g["wq"] = np.einsum("bsd,bse->de", U, gQ)
    g["wk"] = np.einsum("bsd,bse->de", U, gK)
    g["wv"] = np.einsum("bsd,bse->de", U, gV)
    gU = gQ @ bp["wq"].T + gK @ bp["wk"].T + gV @ bp["wv"].T
    if pre_ln:
        gu, g["ln0_g"], g["ln0_b"] = layer_norm_backward(gU, ln0)
        gX += gu
    else:
        gX += gU
    return gX, g


def _check_tokens(X: np.ndarray, bp: dict) -> None:
    if X.ndim != 3 or X.shape[-1] != bp["wq"].shape[0]:
        raise InvalidArgument(f"expected T x N x {bp['wq'].shape[0]} tokens, got {X.shape}")


def spatial_encoder_forward(X: np.ndarray, bp: dict, pre_ln: bool = False, ln_bypass: bool = False) -> np.ndarray:
    """Attend over the N ROI tokens of every frame of a T x N x D tensor."""
    _check_tokens(X, bp)
    return encoder_block(np.asarray(X, dtype=np.float64), bp, pre_ln, ln_bypass)[0]


def temporal_encoder_forward(X: np.ndarray, bp: dict, pre_ln: bool = False, ln_bypass: bool = False) -> np.ndarray:
    """Attend over the T frames of every ROI of a T x N x D tensor."""
    _check_tokens(X, bp)
    Xt = np.asarray(X, dtype=np.float64).transpose(1, 0, 2)
    return encoder_block(Xt, bp, pre_ln, ln_bypass)[0].transpose(1, 0, 2)


# ---------------------------------------------------------------- full network


def scale_input(m: np.ndarray) -> np.ndarray:
    """Map [0, 255] MSTmap values to [-1, 1]."""
    return np.asarray(m, dtype=np.float64) / 127.5 - 1.0


def _check_input(x: np.ndarray, cfg: ModelConfig) -> None:
    if x.ndim != 4 or x.shape[1:] != (cfg.T, cfg.N, cfg.C):
        raise InvalidArgument(f"expected batch x {cfg.T} x {cfg.N} x {cfg.C} input, got {x.shape}")


def forward_batch(params: dict, cfg: ModelConfig, maps: np.ndarray):
    """Forward a (B, T, N, C) batch of raw MSTmap windows. Returns ((B, T) outputs, cache)."""
    maps = np.asarray(maps, dtype=np.float64)
    _check_input(maps, cfg)
    Bw, T, N, _ = maps.shape
    D = cfg.D
    xin = scale_input(maps)
    X = xin @ params["embed.w"] + params["embed.b"]
    X = X + params["pos.spatial"][None, None] + params["pos.temporal"][None, :, None]
    caches = []
    for l in range(cfg.L):
        bp = block_params(params, l, "spatial")
        out, cs = encoder_block(X.reshape(Bw * T, N, D), bp, cfg.pre_ln, cfg.ln_bypass)
        X = out.reshape(Bw, T, N, D)
        bp = block_params(params, l, "temporal")
        Xt = X.transpose(0, 2, 1, 3).reshape(Bw * N, T, D)
        out, ct = encoder_block(Xt, bp, cfg.pre_ln, cfg.ln_bypass)
        X = out.reshape(Bw, N, T, D).transpose(0, 2, 1, 3)
        caches.append((cs, ct))
    h = X.mean(axis=2)
    y = h @ params["head.w"] + params["head.b"][0]
    return y, (xin, caches, h)


def backward_batch(params: dict, cfg: ModelConfig, cache, gy: np.ndarray):
    """Reverse pass for :func:`forward_batch`. Returns (param grads, grad wrt raw maps)."""
    xin, caches, h = cache
    Bw, T, N, _ = xin.shape
    D = cfg.D
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    grads["head.w"] = np.einsum("btd,bt->d", h, gy)
    grads["head.b"] = np.array([gy.sum()])
    gX = np.broadcast_to((gy[..., None] * params["head.w"])[:, :, None, :] / N, (Bw, T, N, D)).copy()
    for l in reversed(range(cfg.L)):
        cs, ct = caches[l]
        bp = block_params(params, l, "temporal")
        gXt = gX.transpose(0, 2, 1, 3).reshape(Bw * N, T, D)
        gin, gb = encoder_block_backward(gXt, bp, ct)
        for k, v in gb.items():
            grads[f"loop{l}.temporal.{k}"] += v
        gX = gin.reshape(Bw, N, T, D).transpose(0, 2, 1, 3)
        bp = block_params(params, l, "spatial")
        gin, gb = encoder_block_backward(gX.reshape(Bw * T, N, D), bp, cs)
        for k, v in gb.items():
            grads[f"loop{l}.spatial.{k}"] += v
        gX = gin.reshape(Bw, T, N, D)
    grads["pos.spatial"] = gX.sum(axis=(0, 1))
    grads["pos.temporal"] = gX.sum(axis=(0, 2))
    grads["embed.b"] = gX.sum(axis=(0, 1, 2))
    grads["embed.w"] = np.einsum("btnc,btnd->cd", xin, gX)
    gmaps = (gX @ params["embed.w"].T) / 127.5
    return grads, gmaps


def st_former_forward(m, params: dict, cfg: ModelConfig):
    """Single MSTmap window (``MstMap`` or T x N x C array) -> rPPG ``Waveform``."""
    from pulseforge.signalcore import Waveform

    data = m.data if hasattr(m, "meta_roi_count") else np.asarray(m)
    fs = getattr(m, "fs", 30.0)
    y, _ = forward_batch(params, cfg, data[None])
    return Waveform(y[0], fs)


def st_former_backward(m, params: dict, cfg: ModelConfig, upstream_grad):
    """Parameter gradients and input gradient for upstream dL/dy (length T)."""
    data = m.data if hasattr(m, "meta_roi_count") else np.asarray(m)
    gy = np.asarray(upstream_grad, dtype=np.float64)
    if gy.shape != (cfg.T,):
        raise InvalidArgument(f"upstream gradient must have length {cfg.T}, got {gy.shape}")
    _, cache = forward_batch(params, cfg, data[None])
    grads, gmaps = backward_batch(params, cfg, cache, gy[None])
    return grads, gmaps[0]
