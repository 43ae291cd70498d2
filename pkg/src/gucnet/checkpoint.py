"""GUCW model checkpoints.

Layout, little-endian throughout::

    b"GUCW"
    u32 version (=1)
    u32 mode tag            0 baseline, 1 prototype, 2 texture
    u32 num_classes C
    f64 dropout
    u32 len, u32 dims...    tower_x layer dims [D_in, ..., K]
    u32 len, u32 dims...    tower_y layer dims (len 0 when absent)
    u32 prototype kind      0 none, 1 multi_hot, 2 random_unit
    u32 ones-or-seed
    f64 x C*K               prototype rows (only when kind != 0)
    f64 blocks              tower_x W0 b0 W1 b1 ..., tower_y ..., head W, head b

Weights are stored (fan_in, fan_out) row-major.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import ClassifierHead, FcnTower, GucnetModel, Mode
from .prototypes import PrototypeSet

MAGIC = b"GUCW"
VERSION = 1
_MODE_TAGS = {Mode.BASELINE: 0, Mode.PROTOTYPE: 1, Mode.TEXTURE: 2}
_PROTO_TAGS = {"multi_hot": 1, "random_unit": 2}


class BadCheckpoint(ValueError):
    pass


def _pack_dims(dims) -> bytes:
    return struct.pack(f"<I{len(dims)}I", len(dims), *dims)


def save_checkpoint(model: GucnetModel, path) -> None:
    parts = [MAGIC, struct.pack("<III", VERSION, _MODE_TAGS[model.mode], model.num_classes),
             struct.pack("<d", model.tower_x.dropout), _pack_dims(model.tower_x.dims),
             _pack_dims(model.tower_y.dims if model.tower_y is not None else [])]
    p = model.prototypes
    if p is None:
        parts.append(struct.pack("<II", 0, 0))
    else:
        extra = p.ones if p.kind == "multi_hot" else (p.seed or 0)
        parts.append(struct.pack("<II", _PROTO_TAGS[p.kind], extra))
        parts.append(np.ascontiguousarray(p.vectors, dtype="<f8").tobytes())
    for arr in model.parameters().values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise BadCheckpoint(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def dims(self) -> list:
        n = self.u32()
        if n > 64:
            raise BadCheckpoint(f"{self.path}: implausible layer count {n}")
        return list(struct.unpack(f"<{n}I", self.take(4 * n)))

    def floats(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), "<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path) -> GucnetModel:
    """Rebuild a model from a GUCW file; the result is in eval mode."""
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != MAGIC:
        raise BadCheckpoint(f"{path}: bad magic, not a GUCW checkpoint")
    version = r.u32()
    if version != VERSION:
        raise BadCheckpoint(f"{path}: unsupported checkpoint version {version}")
    tag = r.u32()
    modes = {v: k for k, v in _MODE_TAGS.items()}
    if tag not in modes:
        raise BadCheckpoint(f"{path}: unknown mode tag {tag}")
    mode = modes[tag]
    num_classes = r.u32()
    dropout = r.f64()
    dims_x, dims_y = r.dims(), r.dims()
    if len(dims_x) < 2:
        raise BadCheckpoint(f"{path}: tower_x needs at least two dims")
    latent = dims_x[-1]
    proto_tag, proto_extra = r.u32(), r.u32()
    prototypes = None
    if proto_tag:
        kinds = {v: k for k, v in _PROTO_TAGS.items()}
        if proto_tag not in kinds:
            raise BadCheckpoint(f"{path}: unknown prototype kind {proto_tag}")
        kind = kinds[proto_tag]
        vec = r.floats((num_classes, latent))
        vec.flags.writeable = False
        prototypes = PrototypeSet(vec, kind, ones=proto_extra if kind == "multi_hot" else None,
                                  seed=proto_extra if kind == "random_unit" else None)
    try:
        tower_x = FcnTower(dims_x, dropout)
        tower_y = FcnTower(dims_y, dropout) if dims_y else None
        head = ClassifierHead(latent, num_classes)
        model = GucnetModel(mode, tower_x, head, tower_y, prototypes)
    except ValueError as exc:
        raise BadCheckpoint(f"{path}: inconsistent checkpoint ({exc})") from None
    for name, arr in model.parameters().items():
        arr[...] = r.floats(arr.shape)
    if r.pos != len(r.raw):
        raise BadCheckpoint(f"{path}: {len(r.raw) - r.pos} trailing bytes")
    return model.eval()
