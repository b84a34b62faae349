# pose_boost/serialization.py
"""
Binary tensor codec and checkpoint files.

Tensor record (little-endian)::

    u8   dtype tag   (0 = float32, 1 = float64)
    u32  rank
    u64  extent * rank
    ...  row-major payload

Checkpoint file::

    b"FBN1"
    32 bytes  SHA-256 config digest
    u32 + utf-8  canonical config JSON
    u32  tensor count
    per tensor: u32 + utf-8 name, tensor record
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Mapping

import numpy as np

from pose_boost.errors import CheckpointError

log = logging.getLogger(__name__)

MAGIC = b"FBN1"
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPE_OF_TAG = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def canonical_json(config: Mapping[str, Any]) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_digest(config: Mapping[str, Any]) -> bytes:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).digest()


def write_tensor(stream: IO[bytes], array: np.ndarray) -> None:
    dtype = np.dtype(array.dtype)
    if dtype not in _TAGS:
        raise CheckpointError(f"cannot serialize dtype {dtype}")
    tag = _TAGS[dtype]
    stream.write(struct.pack("<BI", tag, array.ndim))
    if array.ndim:
        stream.write(struct.pack(f"<{array.ndim}Q", *array.shape))
    stream.write(np.ascontiguousarray(array, dtype=_DTYPE_OF_TAG[tag]).tobytes())


def _read_exact(stream: IO[bytes], n: int) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated stream: wanted {n} bytes, got {len(data)}")
    return data


def read_tensor(stream: IO[bytes]) -> np.ndarray:
    tag, rank = struct.unpack("<BI", _read_exact(stream, 5))
    if tag not in _DTYPE_OF_TAG:
        raise CheckpointError(f"unknown dtype tag {tag}")
    shape = struct.unpack(f"<{rank}Q", _read_exact(stream, 8 * rank)) if rank else ()
    dtype = _DTYPE_OF_TAG[tag]
    count = int(np.prod(shape)) if shape else 1
    payload = _read_exact(stream, count * dtype.itemsize)
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))


def _write_str(stream: IO[bytes], text: str) -> None:
    raw = text.encode("utf-8")
    stream.write(struct.pack("<I", len(raw)))
    stream.write(raw)


def _read_str(stream: IO[bytes]) -> str:
    (n,) = struct.unpack("<I", _read_exact(stream, 4))
    return _read_exact(stream, n).decode("utf-8")


@dataclass
class Checkpoint:
    config: dict[str, Any]
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def digest(self) -> bytes:
        return config_digest(self.config)


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(ckpt.digest)
    _write_str(buf, canonical_json(ckpt.config))
    buf.write(struct.pack("<I", len(ckpt.tensors)))
    # Sorted names keep files byte-identical regardless of insertion order.
    for name in sorted(ckpt.tensors):
        _write_str(buf, name)
        write_tensor(buf, ckpt.tensors[name])
    return buf.getvalue()


def loads_checkpoint(raw: bytes) -> Checkpoint:
    stream = io.BytesIO(raw)
    if _read_exact(stream, 4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    digest = _read_exact(stream, 32)
    config = json.loads(_read_str(stream))
    if config_digest(config) != digest:
        raise CheckpointError("config digest does not match the stored config")
    (count,) = struct.unpack("<I", _read_exact(stream, 4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = _read_str(stream)
        tensors[name] = read_tensor(stream)
    return Checkpoint(config=config, tensors=tensors)


def save_checkpoint(path: Path | str, ckpt: Checkpoint) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(dumps_checkpoint(ckpt))
    log.info("Wrote checkpoint with %d tensors to %s", len(ckpt.tensors), p)
    return p


def load_checkpoint(path: Path | str) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint not found: {p}")
    return loads_checkpoint(p.read_bytes())
