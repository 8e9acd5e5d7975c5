"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic b"SFCKPT\\0\\0"
    offset 8   uint32    format version
    offset 12  uint32    header length H in bytes
    offset 16  H bytes   UTF-8 JSON header, keys sorted
    offset 16+H          payload: every parameter as float64 '<f8', row-major,
                         concatenated in header order

The header holds ``config``, ``vocab`` (token list by id, or null),
``params`` (name, shape, offset and count in float64 elements),
``payload_bytes``, ``payload_crc32`` and a free-form ``meta`` object.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .autodiff import Tensor
from .cells import ModelConfig
from .data import Vocabulary
from .model import CaptionModel

MAGIC = b"SFCKPT\x00\x00"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


class CheckpointError(ValueError):
    """Unreadable or corrupt checkpoint."""


class CheckpointVersionError(CheckpointError):
    pass


def dumps(model: CaptionModel, meta: dict | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, p in model.params.items():
        arr = np.ascontiguousarray(p.data, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    payload = b"".join(chunks)
    header = {
        "config": model.config.to_dict(),
        "vocab": None if model.vocab is None else model.vocab.itos,
        "params": entries,
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + payload


def loads(blob: bytes) -> tuple[CaptionModel, dict]:
    if len(blob) < _PREFIX.size:
        raise CheckpointError("checkpoint truncated before header")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, this build reads version {VERSION}")
    start = _PREFIX.size
    if len(blob) < start + hlen:
        raise CheckpointError("checkpoint truncated inside header")
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if not isinstance(header, dict) or not {"config", "vocab", "params", "payload_bytes",
                                             "payload_crc32"} <= set(header):
        raise CheckpointError("checkpoint header is missing required fields")
    payload = blob[start + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"payload is {len(payload)} bytes, header says {header['payload_bytes']}")
    if zlib.crc32(payload) != header["payload_crc32"]:
        raise CheckpointError("payload checksum mismatch")
    values = np.frombuffer(payload, dtype="<f8")
    params = {}
    try:
        for e in header["params"]:
            arr = values[e["offset"]:e["offset"] + e["count"]].reshape(e["shape"]).astype(np.float64)
            params[e["name"]] = Tensor(arr, requires_grad=True, name=e["name"])
        config = ModelConfig.from_dict(header["config"])
        vocab = None if header["vocab"] is None else Vocabulary(header["vocab"])
        model = CaptionModel(config, params, vocab)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"inconsistent checkpoint: {exc}") from None
    return model, header.get("meta", {})


def save_checkpoint(model: CaptionModel, path, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model, meta))


def load_checkpoint(path) -> CaptionModel:
    with open(path, "rb") as fh:
        return loads(fh.read())[0]


def load_checkpoint_with_meta(path) -> tuple[CaptionModel, dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
