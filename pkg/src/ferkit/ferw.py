"""FERW: the portable, checksummed, self-describing weight container.

Byte layout (all integers little-endian):
    magic "FERW" | u32 version=1 | u32 manifest length | manifest (UTF-8 JSON)
    then per-tensor records in manifest order:
        u16 name length | name | u8 dtype code (1 = float32) | u8 rank |
        rank x u32 extents | raw little-endian float32 values
    trailer: u32 CRC-32 over all preceding bytes.
"""

from __future__ import annotations

import io
import json
import struct
import zlib

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    UnsupportedVersionError,
    WeightFormatError,
)
from .model import LayerSpec, Model, ModelSpec

MAGIC = b"FERW"
VERSION = 1
DTYPE_FLOAT32 = 1

_STAT_LEAVES = ("running_mean", "running_var")


def _tensor_order(model: Model) -> list[tuple[str, np.ndarray]]:
    names = list(model.spec.parameter_shapes()) + list(model.spec.stat_shapes())
    merged = {**model.params, **model.stats}
    return [(name, merged[name]) for name in names]


def save_weights(model: Model, destination) -> None:
    """Write the model to a binary stream or file path."""
    if isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__"):
        with open(destination, "wb") as fh:
            _write(model, fh)
        return
    _write(model, destination)


def _write(model: Model, fh) -> None:
    tensors = _tensor_order(model)
    manifest = {
        "input_shape": list(model.spec.input_shape),
        "layers": [{"kind": l.kind, "config": l.config} for l in model.spec.layers],
        "labels": list(model.spec.labels),
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in tensors],
    }
    manifest_bytes = json.dumps(manifest).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<I", len(manifest_bytes)))
    buf.write(manifest_bytes)
    for name, arr in tensors:
        name_bytes = name.encode("utf-8")
        buf.write(struct.pack("<H", len(name_bytes)))
        buf.write(name_bytes)
        buf.write(struct.pack("<BB", DTYPE_FLOAT32, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    payload = buf.getvalue()
    fh.write(payload)
    fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFormatError(f"truncated stream while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_weights(source) -> Model:
    """Read a FERW stream (path, file object, or bytes) into a Model.

    Validates magic, version, checksum, and manifest-vs-tensor shape
    agreement; accepts any manifest built from the supported layer kinds.
    """
    if isinstance(source, bytes):
        data = source
    elif isinstance(source, str) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    return _parse(data)


def _parse(data: bytes) -> Model:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("stream does not start with the FERW magic")
    if len(data) < 12 + 4:
        raise WeightFormatError("truncated stream: missing header or checksum")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )

    r = _Reader(data[:-4])
    r.take(4, "magic")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported FERW version {version}")
    (manifest_len,) = r.unpack("<I", "manifest length")
    try:
        manifest = json.loads(r.take(manifest_len, "manifest").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"manifest is not valid JSON: {exc}") from exc

    try:
        spec = ModelSpec(
            input_shape=tuple(manifest["input_shape"]),
            layers=tuple(LayerSpec(l["kind"], l.get("config", {})) for l in manifest["layers"]),
            labels=tuple(manifest["labels"]),
        )
        declared = manifest["tensors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightFormatError(f"malformed manifest: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    for entry in declared:
        (name_len,) = r.unpack("<H", "tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        dtype_code, rank = r.unpack("<BB", "tensor header")
        if dtype_code != DTYPE_FLOAT32:
            raise WeightFormatError(f"tensor {name}: unsupported dtype code {dtype_code}")
        shape = r.unpack(f"<{rank}I", "tensor extents")
        if name != entry["name"] or list(shape) != list(entry["shape"]):
            raise WeightFormatError(
                f"tensor {name} with shape {list(shape)} does not match manifest entry "
                f"{entry['name']} {entry['shape']}"
            )
        count = int(np.prod(shape)) if rank else 1
        raw = r.take(4 * count, f"tensor {name} data")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if r.pos != len(r.data):
        raise WeightFormatError(f"{len(r.data) - r.pos} unexpected trailing bytes")

    params = {n: t for n, t in tensors.items() if not n.endswith(_STAT_LEAVES)}
    stats = {n: t for n, t in tensors.items() if n.endswith(_STAT_LEAVES)}
    return Model(spec, params, stats)
