"""Binary parameter checkpoints.

Layout: ``RPPG``, u8 version, u32 field count, u32 config fields, then
tensors until EOF as (u16 name length, name, u8 rank, u32 dims, f32 data),
all little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from pulseforge.errors import InvalidArgument
from pulseforge.model.stencoder import EncoderConfig
from pulseforge.model.stformer import ModelConfig

MAGIC = b"RPPG"
VERSION = 1
KIND_STFORMER = 0
KIND_STENCODER = 1


def _config_fields(cfg) -> list[int]:
    if isinstance(cfg, ModelConfig):
        return [KIND_STFORMER, cfg.D, cfg.L, cfg.N, cfg.T, cfg.C, cfg.hidden, int(cfg.pre_ln), int(cfg.ln_bypass)]
    if isinstance(cfg, EncoderConfig):
        return [KIND_STENCODER, cfg.S_sp, cfg.width, cfg.stages, cfg.C_in]
    raise InvalidArgument(f"unknown model config type {type(cfg).__name__}")


def _config_from_fields(f: list[int]):
    if f and f[0] == KIND_STFORMER and len(f) == 9:
        return ModelConfig(D=f[1], L=f[2], N=f[3], T=f[4], C=f[5], mlp_hidden=None if f[6] == 2 * f[1] else f[6], pre_ln=bool(f[7]), ln_bypass=bool(f[8]))
    if f and f[0] == KIND_STENCODER and len(f) == 5:
        return EncoderConfig(S_sp=f[1], width=f[2], stages=f[3], C_in=f[4])
    raise InvalidArgument(f"unrecognised config block {f}")


def to_bytes(params: dict, cfg) -> bytes:
    fields = _config_fields(cfg)
    out = [MAGIC, struct.pack("<BI", VERSION, len(fields)), struct.pack(f"<{len(fields)}I", *fields)]
    for name in sorted(params):
        arr = np.asarray(params[name])
        key = name.encode()
        out.append(struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.astype("<f4").tobytes(order="C"))
    return b"".join(out)


def from_bytes(buf: bytes):
    if buf[:4] != MAGIC:
        raise InvalidArgument("not a checkpoint (bad magic)")
    version, nf = struct.unpack_from("<BI", buf, 4)
    if version != VERSION:
        raise InvalidArgument(f"unsupported checkpoint version {version}")
    off = 9
    fields = list(struct.unpack_from(f"<{nf}I", buf, off))
    off += 4 * nf
    cfg = _config_from_fields(fields)
    params = {}
    try:
        while off < len(buf):
            (n,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off : off + n].decode()
            off += n
            (rank,) = struct.unpack_from("<B", buf, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", buf, off)
            off += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            if off + 4 * count > len(buf):
                raise InvalidArgument(f"truncated tensor {name!r}")
            params[name] = np.frombuffer(buf, "<f4", count, off).astype(np.float64).reshape(dims)
            off += 4 * count
    except struct.error as exc:
        raise InvalidArgument(f"corrupt checkpoint: {exc}") from exc
    return params, cfg


def save(path: str | Path, params: dict, cfg) -> None:
    Path(path).write_bytes(to_bytes(params, cfg))


def load(path: str | Path):
    return from_bytes(Path(path).read_bytes())
