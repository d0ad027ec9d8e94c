"""Multi-scale spatial-temporal maps built from per-frame meta-ROI pixel statistics."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from pulseforge.errors import InvalidArgument

CHANNELS = ("R", "G", "B", "Y", "U", "V")
MAGIC = b"MSTM"
VERSION = 1


@dataclass(frozen=True, eq=False)
class RoiFrameStats:
    """Per meta-ROI RGB pixel sums (R x 3) and pixel counts (R,) for one frame."""

    pixel_sum: np.ndarray
    pixel_count: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.pixel_sum, dtype=np.float64)
        c = np.asarray(self.pixel_count, dtype=np.int64)
        if s.ndim != 2 or s.shape[1] != 3 or s.shape[0] < 1:
            raise InvalidArgument(f"pixel_sum must be R x 3 with R >= 1, got {s.shape}")
        if c.shape != (s.shape[0],) or np.any(c <= 0):
            raise InvalidArgument("pixel_count must hold one positive count per meta-ROI")
        object.__setattr__(self, "pixel_sum", s)
        object.__setattr__(self, "pixel_count", c)

    @property
    def n_rois(self) -> int:
        return self.pixel_count.size


@dataclass(frozen=True, eq=False)
class MstMap:
    data: np.ndarray  # T x N x C
    fs: float
    meta_roi_count: int

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise InvalidArgument(f"MSTmap data must be T x N x C, got {d.shape}")
        if d.shape[1] != 2**self.meta_roi_count - 1:
            raise InvalidArgument(
                f"N={d.shape[1]} does not match 2^R - 1 for R={self.meta_roi_count}"
            )
        if not np.all(np.isfinite(d)):
            raise InvalidArgument("MSTmap contains non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 300
    step: int = 15

    def __post_init__(self):
        if self.window_len < 1 or self.step < 1:
            raise InvalidArgument("window_len and step must be >= 1")


def enumerate_combinations(R: int) -> list[tuple[int, ...]]:
    """Non-empty subsets of meta-ROIs {1..R} in ascending bitmask order."""
    if not 1 <= R <= 16:
        raise InvalidArgument(f"meta-ROI count must be in [1, 16], got {R}")
    return [tuple(r + 1 for r in range(R) if m >> r & 1) for m in range(1, 2**R)]


def combination_mask(R: int) -> np.ndarray:
    """(2^R - 1) x R indicator matrix matching :func:`enumerate_combinations`."""
    m = np.arange(1, 2**R)[:, None]
    return ((m >> np.arange(R)[None, :]) & 1).astype(np.float64)


def combo_channel_mean(stats: RoiFrameStats, subset: Sequence[int]) -> np.ndarray:
    """Pixel-pooled RGB mean over the union of the given (1-based) meta-ROIs."""
    idx = sorted(set(subset))
    if not idx:
        raise InvalidArgument("ROI subset must be non-empty")
    if idx[0] < 1 or idx[-1] > stats.n_rois:
        raise InvalidArgument(f"ROI indices must lie in [1, {stats.n_rois}], got {idx}")
    sel = np.array(idx) - 1
    return stats.pixel_sum[sel].sum(axis=0) / stats.pixel_count[sel].sum()


def rgb_to_yuv(rgb) -> np.ndarray:
    """BT.601 luma with analog chroma scale factors and +128 chroma offset.

    Works on (..., 3) arrays.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    u = 0.492 * (b - y) + 128.0
    v = 0.877 * (r - y) + 128.0
    return np.stack([y, u, v], axis=-1)


def minmax_scale(data: np.ndarray, axis: int = 0) -> np.ndarray:
    """Scale to [0, 255] along ``axis``; constant slices map to 0."""
    lo = data.min(axis=axis, keepdims=True)
    span = data.max(axis=axis, keepdims=True) - lo
    flat = span <= 1e-12 * np.maximum(1.0, np.abs(lo))
    return np.where(flat, 0.0, 255.0 * (data - lo) / np.where(flat, 1.0, span))


def build_mstmap_arrays(
    pixel_sums: np.ndarray, pixel_counts: np.ndarray, fs: float, scale: bool = True
) -> MstMap:
    """Vectorized MSTmap construction.

    pixel_sums: T x R x 3, pixel_counts: R or T x R.
    """
    sums = np.asarray(pixel_sums, dtype=np.float64)
    counts = np.asarray(pixel_counts, dtype=np.float64)
    T, R, _ = sums.shape
    if counts.ndim == 1:
        counts = np.broadcast_to(counts, (T, R))
    mask = combination_mask(R)
    rgb = np.einsum("trc,nr->tnc", sums, mask) / (counts @ mask.T)[..., None]
    data = np.concatenate([rgb, rgb_to_yuv(rgb)], axis=-1)
    if scale:
        data = minmax_scale(data, axis=0)
    return MstMap(data, fs, R)


def build_mstmap(stats_seq: Sequence[RoiFrameStats], fs: float, scale: bool = True) -> MstMap:
    if not stats_seq:
        raise InvalidArgument("need at least one frame of ROI statistics")
    R = stats_seq[0].n_rois
    if any(s.n_rois != R for s in stats_seq):
        raise InvalidArgument("all frames must carry the same number of meta-ROIs")
    sums = np.stack([s.pixel_sum for s in stats_seq])
    counts = np.stack([s.pixel_count for s in stats_seq])
    return build_mstmap_arrays(sums, counts, fs, scale=scale)


def window_starts(T: int, spec: WindowSpec) -> list[int]:
    if spec.window_len > T:
        raise InvalidArgument(f"window of {spec.window_len} frames exceeds map length {T}")
    return list(range(0, T - spec.window_len + 1, spec.step))


def sliding_windows(m: MstMap, spec: WindowSpec = WindowSpec()) -> list[MstMap]:
    return [
        MstMap(m.data[s : s + spec.window_len], m.fs, m.meta_roi_count)
        for s in window_starts(m.T, spec)
    ]


# ----------------------------------------------------------------------------- IO


def to_bytes(m: MstMap) -> bytes:
    T, N, C = m.data.shape
    head = MAGIC + struct.pack("<BIIIf", VERSION, T, N, C, m.fs)
    return head + m.data.astype("<f4").tobytes(order="C")


def from_bytes(buf: bytes) -> MstMap:
    if buf[:4] != MAGIC:
        raise InvalidArgument("not an MSTmap file (bad magic)")
    version, T, N, C, fs = struct.unpack_from("<BIIIf", buf, 4)
    if version != VERSION:
        raise InvalidArgument(f"unsupported MSTmap version {version}")
    off = 4 + struct.calcsize("<BIIIf")
    if len(buf) - off != 4 * T * N * C:
        raise InvalidArgument("MSTmap payload size does not match header")
    data = np.frombuffer(buf, dtype="<f4", offset=off).astype(np.float64).reshape(T, N, C)
    R = (N + 1).bit_length() - 1
    return MstMap(data, float(fs), R)


def save(m: MstMap, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(m))


def load(path: str | Path) -> MstMap:
    return from_bytes(Path(path).read_bytes())


def write_csv(m: MstMap, path: str | Path) -> None:
    T, N, C = m.data.shape
    t, n, c = np.meshgrid(np.arange(T), np.arange(N), np.arange(C), indexing="ij")
    vals = m.data.astype("<f4").astype(np.float64).ravel()
    rows = (f"{a},{b},{k},{v!r}" for a, b, k, v in zip(t.ravel(), n.ravel(), c.ravel(), vals.tolist()))
    Path(path).write_text("t,n,c,value\n" + "\n".join(rows) + "\n")
