"""Self-describing single-file checkpoints.

All fields little-endian. Every payload starts with a 4-byte magic naming the
detector kind and a u32 format version, followed by the normalizer so that
inference needs nothing else:

``VRDE``  u32 T, u32 C, u32 base_maps, f64 kl_weight, f64 logvar_lo, f64 logvar_hi,
          f32[C] min, f32[C] max, f32 parameters in build order
``VKNN``  u32 k, u32 N, u32 C, f32[C] min, f32[C] max, f64[N*C] points
``VIFO``  u32 C, u32 psi, u32 n_trees, u32 subsample, f64 contamination,
          f64 threshold, f32[C] min, f32[C] max, then per tree u32 n_nodes and
          the node arrays (i32 feature, f64 threshold, i32 left, i32 right,
          i32 size, i32 depth, f64 lo, f64 hi)
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .baselines.iforest import IsoForest, IsoTree
from .baselines.knn import KnnIndex
from .data import Normalizer
from .model import VaradeConfig, VaradeModel, build

VERSION = 1
MAGIC = {"varade": b"VRDE", "knn": b"VKNN", "iforest": b"VIFO"}
KIND = {v: k for k, v in MAGIC.items()}

AnyModel = Union[VaradeModel, KnnIndex, IsoForest]


class CheckpointError(ValueError):
    pass


def model_kind(model: AnyModel) -> str:
    if isinstance(model, VaradeModel):
        return "varade"
    if isinstance(model, KnnIndex):
        return "knn"
    if isinstance(model, IsoForest):
        return "iforest"
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def _arr(fh: BinaryIO, dtype: str, count: int) -> np.ndarray:
    dt = np.dtype(dtype)
    raw = fh.read(dt.itemsize * count)
    if len(raw) != dt.itemsize * count:
        raise CheckpointError("truncated checkpoint")
    return np.frombuffer(raw, dtype=dt).copy()


def _unpack(fh: BinaryIO, fmt: str) -> tuple:
    size = struct.calcsize(fmt)
    raw = fh.read(size)
    if len(raw) != size:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack(fmt, raw)


def _write_normalizer(fh, norm: Normalizer) -> None:
    fh.write(norm.minimum.astype("<f4").tobytes())
    fh.write(norm.maximum.astype("<f4").tobytes())


def _read_normalizer(fh, c: int) -> Normalizer:
    return Normalizer(_arr(fh, "<f4", c), _arr(fh, "<f4", c))


def dumps(model: AnyModel, normalizer: Normalizer) -> bytes:
    kind = model_kind(model)
    fh = io.BytesIO()
    fh.write(MAGIC[kind])
    fh.write(struct.pack("<I", VERSION))
    if kind == "varade":
        cfg = model.config
        if normalizer.n_channels != cfg.channels:
            raise CheckpointError("normalizer and model disagree on channel count")
        lo, hi = cfg.logvar_clamp
        fh.write(struct.pack("<IIIddd", cfg.window, cfg.channels, cfg.base_maps, cfg.kl_weight, lo, hi))
        _write_normalizer(fh, normalizer)
        for p in model.parameters():
            fh.write(p.data.astype("<f4").tobytes())
    elif kind == "knn":
        n, c = model.points.shape
        fh.write(struct.pack("<III", model.k, n, c))
        _write_normalizer(fh, normalizer)
        fh.write(model.points.astype("<f8").tobytes())
    else:
        fh.write(struct.pack("<IIIIdd", model.n_features, model.psi, len(model.trees), model.subsample, model.contamination, model.threshold))
        _write_normalizer(fh, normalizer)
        for t in model.trees:
            fh.write(struct.pack("<I", len(t.feature)))
            for arr, dt in ((t.feature, "<i4"), (t.threshold, "<f8"), (t.left, "<i4"), (t.right, "<i4"), (t.size, "<i4"), (t.depth, "<i4"), (t.lo, "<f8"), (t.hi, "<f8")):
                fh.write(arr.astype(dt).tobytes())
    return fh.getvalue()


def loads(blob: bytes) -> tuple[AnyModel, Normalizer]:
    fh = io.BytesIO(blob)
    magic = fh.read(4)
    if magic not in KIND:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    (version,) = _unpack(fh, "<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    kind = KIND[magic]
    if kind == "varade":
        t, c, base, lam, lo, hi = _unpack(fh, "<IIIddd")
        cfg = VaradeConfig(window=t, channels=c, base_maps=base, kl_weight=lam, logvar_clamp=(lo, hi))
        norm = _read_normalizer(fh, c)
        model = build(cfg, seed=0)
        for p in model.parameters():
            p.data = _arr(fh, "<f4", p.size).astype(np.float32).reshape(p.shape)
        result: AnyModel = model
    elif kind == "knn":
        k, n, c = _unpack(fh, "<III")
        norm = _read_normalizer(fh, c)
        result = KnnIndex(_arr(fh, "<f8", n * c).reshape(n, c), k)
    else:
        c, psi, n_trees, subsample, contamination, threshold = _unpack(fh, "<IIIIdd")
        norm = _read_normalizer(fh, c)
        trees = []
        for _ in range(n_trees):
            (m,) = _unpack(fh, "<I")
            parts = [_arr(fh, dt, m) for dt in ("<i4", "<f8", "<i4", "<i4", "<i4", "<i4", "<f8", "<f8")]
            ints = [p.astype(np.int64) for p in (parts[0], parts[2], parts[3], parts[4], parts[5])]
            trees.append(IsoTree(ints[0], parts[1], ints[1], ints[2], ints[3], ints[4], parts[6], parts[7]))
        result = IsoForest(c, psi, trees, n_trees, subsample, contamination, threshold)
    if fh.read(1):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return result, norm


def save_checkpoint(path, model: AnyModel, normalizer: Normalizer) -> None:
    Path(path).write_bytes(dumps(model, normalizer))


def load_checkpoint(path) -> tuple[AnyModel, Normalizer]:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e.strerror}") from None
    return loads(blob)
