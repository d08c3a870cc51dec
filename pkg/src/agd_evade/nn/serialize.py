"""Binary model container (``.agdm``).

Layout, all integers little-endian::

    8 bytes   magic b"AGDMODEL"
    u32       format version
    u32       metadata length N
    N bytes   UTF-8 JSON metadata (layers, class names, parameter manifest, tags)
    ...       float32 parameter arrays in declaration order
    u32       CRC-32 of every preceding byte
"""

import json
import struct
import zlib

import numpy as np

from ..errors import ChecksumMismatch, IoFailure, VersionMismatch
from .graph import ModelGraph
from .layers import LayerSpec

MAGIC = b"AGDMODEL"
FORMAT_VERSION = 1
MAX_FILE_BYTES = 10 * 1024 * 1024


def to_bytes(model: ModelGraph) -> bytes:
    meta = {
        "input_rows": model.input_rows,
        "input_cols": model.input_cols,
        "class_names": list(model.class_names),
        "layers": [spec.to_dict() for spec in model.layers],
        "params": [[name, list(p.shape)] for name, p in model.params.items()],
        "metadata": model.metadata,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta_bytes)), meta_bytes]
    for p in model.params.values():
        body.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    blob = b"".join(body)
    return blob + struct.pack("<I", zlib.crc32(blob))


def from_bytes(blob: bytes) -> ModelGraph:
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise ChecksumMismatch("not a model file or truncated header")
    version, meta_len = struct.unpack_from("<II", blob, 8)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"file format version {version}, this build reads {FORMAT_VERSION}")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) != crc:
        raise ChecksumMismatch("checksum does not match contents")
    meta = json.loads(blob[16:16 + meta_len].decode("utf-8"))
    offset = 16 + meta_len
    params = {}
    for name, shape in meta["params"]:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        params[name] = arr.reshape(shape).astype(np.float32)
        offset += 4 * count
    if offset != len(blob) - 4:
        raise ChecksumMismatch("parameter block size does not match the manifest")
    return ModelGraph(
        tuple(LayerSpec.from_dict(d) for d in meta["layers"]),
        params,
        tuple(meta["class_names"]),
        meta["input_rows"],
        meta["input_cols"],
        meta.get("metadata", {}),
    )


def save_model(model: ModelGraph, path) -> int:
    """Write ``model`` to ``path``; returns the file size in bytes."""
    blob = to_bytes(model)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return len(blob)


def load_model(path) -> ModelGraph:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return from_bytes(blob)
