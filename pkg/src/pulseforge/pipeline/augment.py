"""MSTmap augmentations: time flip, ROI flip, frequency resampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pulseforge.mstmap import MstMap


@dataclass(frozen=True)
class AugmentFlags:
    flip_time: bool = False
    flip_roi: bool = False
    freq_resample: bool = False
    freq_resample_range: tuple[float, float] = (0.7, 1.4)


def resample_time_axis(data: np.ndarray, factor: float) -> np.ndarray:
    """Speed the content up by ``factor`` (HR scales by ``factor``), keep T.

    Output frame t reads input position t * factor; positions past the end
    are filled by reflecting the resampled content back on itself.
    """
    T = data.shape[0]
    src = np.arange(T) * factor
    n_valid = int(np.floor((T - 1) / factor)) + 1 if factor > 1 else T
    pos = src[:n_valid]
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, T - 1)
    frac = (pos - lo)[(...,) + (None,) * (data.ndim - 1)]
    out = data[lo] * (1 - frac) + data[hi] * frac
    if n_valid < T:
        reps = int(np.ceil(T / n_valid))
        tiles = [out if i % 2 == 0 else out[::-1] for i in range(reps)]
        out = np.concatenate(tiles, axis=0)[:T]
    return out


def augment_mstmap(m: MstMap, flags: AugmentFlags, rng: np.random.Generator | None = None, hr_bpm: float | None = None):
    """Apply each enabled augmentation with probability 1/2 (freq resample: always when enabled).

    Returns ``(map, hr_scale)``; ``hr_scale`` multiplies any ground-truth HR
    attached to the map.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    data = m.data
    scale = 1.0
    if flags.flip_time and rng.random() < 0.5:
        data = data[::-1]
    if flags.flip_roi and rng.random() < 0.5:
        data = data[:, ::-1]
    if flags.freq_resample:
        lo, hi = flags.freq_resample_range
        scale = float(rng.uniform(lo, hi))
        data = resample_time_axis(data, scale)
    return MstMap(np.ascontiguousarray(data), m.fs, m.meta_roi_count), scale
