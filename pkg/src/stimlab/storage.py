"""Binary formats: per-image feature caches and model files.

Feature cache (little-endian)::

    b"STIMF1"
    u16 id length, id (utf-8)
    u32 dimension, u32 count
    u8  flags (bit 0: positions present)
    f32 payload, count x dimension, row-major
    [i32 x, i32 y] x count          (only when positions are present)
    i32 scale index x count

Model file (little-endian)::

    b"STIMM1", u16 version
    u16 kind length, kind (utf-8)
    u32 json length, json metadata (utf-8)
    u16 array count, then per array:
        u16 name length, name, u8 ndim, u64 x ndim shape, f64 data row-major
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
from pathlib import Path

import numpy as np

from .classifier import BinaryLinearModel, MultiClassModel
from .descriptors import DescriptorSet
from .encoding import Codebook, GaussianMixture

FEATURE_MAGIC = b"STIMF1"
MODEL_MAGIC = b"STIMM1"
MODEL_VERSION = 1


class CacheFormatError(ValueError):
    pass


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CacheFormatError("truncated file")
    return data


def _unpack(fh, fmt: str):
    return struct.unpack(fmt, _read_exact(fh, struct.calcsize(fmt)))


def _pack_str(s: str, width: str = "<H") -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(width, len(raw)) + raw


def _read_str(fh, width: str = "<H") -> str:
    (n,) = _unpack(fh, width)
    return _read_exact(fh, n).decode("utf-8")


def encode_features(ds: DescriptorSet) -> bytes:
    out = io.BytesIO()
    out.write(FEATURE_MAGIC)
    out.write(_pack_str(ds.descriptor_id))
    out.write(struct.pack("<IIB", ds.dimension, len(ds), 1 if ds.has_positions else 0))
    out.write(ds.vectors.astype("<f4").tobytes())
    if ds.has_positions:
        out.write(ds.positions.astype("<i4").tobytes())
    out.write(ds.scale_index.astype("<i4").tobytes())
    return out.getvalue()


def decode_features(data: bytes) -> DescriptorSet:
    fh = io.BytesIO(data)
    if _read_exact(fh, len(FEATURE_MAGIC)) != FEATURE_MAGIC:
        raise CacheFormatError("bad feature-cache magic")
    name = _read_str(fh)
    dim, count, flags = _unpack(fh, "<IIB")
    vectors = np.frombuffer(_read_exact(fh, 4 * dim * count), dtype="<f4").reshape(count, dim)
    positions = None
    if flags & 1:
        positions = np.frombuffer(_read_exact(fh, 8 * count), dtype="<i4").reshape(count, 2)
    scale = np.frombuffer(_read_exact(fh, 4 * count), dtype="<i4")
    if fh.read(1):
        raise CacheFormatError("trailing bytes after feature cache payload")
    return DescriptorSet(vectors.astype(np.float32), positions=positions, scale_index=scale,
                         descriptor_id=name)


def write_bytes_if_changed(path, data: bytes) -> bool:
    """Atomically write ``data`` unless the file already holds it."""
    path = Path(path)
    if path.is_file() and path.read_bytes() == data:
        return False
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return True


def write_features(ds: DescriptorSet, path) -> bool:
    return write_bytes_if_changed(path, encode_features(ds))


def read_features(path) -> DescriptorSet:
    return decode_features(Path(path).read_bytes())


def cache_key(image_path, mask_path, descriptor_spec: str) -> str:
    h = hashlib.sha256()
    for part in (Path(image_path).read_bytes(), Path(mask_path).read_bytes(),
                 descriptor_spec.encode("utf-8"), FEATURE_MAGIC):
        h.update(hashlib.sha256(part).digest())
    return h.hexdigest()[:32]


# --- model files -----------------------------------------------------------

def _encode_model(kind: str, meta: dict, arrays: dict) -> bytes:
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(struct.pack("<H", MODEL_VERSION))
    out.write(_pack_str(kind))
    out.write(_pack_str(json.dumps(meta, sort_keys=True), "<I"))
    out.write(struct.pack("<H", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        out.write(_pack_str(name))
        out.write(struct.pack("<B", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.write(arr.tobytes())
    return out.getvalue()


def _decode_model(data: bytes):
    fh = io.BytesIO(data)
    if _read_exact(fh, len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise CacheFormatError("bad model-file magic")
    (version,) = _unpack(fh, "<H")
    if version != MODEL_VERSION:
        raise CacheFormatError(f"unsupported model-file version {version}")
    kind = _read_str(fh)
    meta = json.loads(_read_str(fh, "<I"))
    (n,) = _unpack(fh, "<H")
    arrays = {}
    for _ in range(n):
        name = _read_str(fh)
        (ndim,) = _unpack(fh, "<B")
        shape = _unpack(fh, f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(_read_exact(fh, 8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    return kind, meta, arrays


def save_model(model, path) -> bool:
    if isinstance(model, Codebook):
        data = _encode_model("codebook", {"seed": model.seed, "inertia": model.inertia},
                             {"centers": model.centers})
    elif isinstance(model, GaussianMixture):
        data = _encode_model("gmm", {"var_floor": model.var_floor},
                             {"weights": model.weights, "means": model.means,
                              "variances": model.variances})
    elif isinstance(model, MultiClassModel):
        meta = {"classes": list(model.classes), "C": [m.C for m in model.models],
                "degenerate": [m.degenerate for m in model.models]}
        data = _encode_model("svm-ova", meta, {"weights": model.weight_matrix, "biases": model.biases})
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return write_bytes_if_changed(path, data)


def load_model(path):
    kind, meta, arrays = _decode_model(Path(path).read_bytes())
    if kind == "codebook":
        return Codebook(arrays["centers"], seed=meta["seed"], inertia=meta["inertia"])
    if kind == "gmm":
        return GaussianMixture(arrays["weights"], arrays["means"], arrays["variances"],
                               var_floor=meta["var_floor"])
    if kind == "svm-ova":
        models = tuple(BinaryLinearModel(w, float(b), c, degenerate=d)
                       for w, b, c, d in zip(arrays["weights"], arrays["biases"],
                                             meta["C"], meta["degenerate"]))
        return MultiClassModel(tuple(meta["classes"]), models)
    raise CacheFormatError(f"unknown model kind {kind!r}")
