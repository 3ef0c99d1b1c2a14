"""Binary tensor and checkpoint files.

Single-tensor format: magic b"PCFT", rank as uint8, one little-endian uint32
per extent, then the row-major float32 payload (little-endian). Checkpoints
wrap a sequence of named tensors: magic b"PCFC", uint8 version, uint32 entry
count, then per entry a uint16 name length, the UTF-8 name, and a PCFT block.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Mapping, Union

import numpy as np

from .autograd import MAX_RANK, Tensor

TENSOR_MAGIC = b"PCFT"
CHECKPOINT_MAGIC = b"PCFC"
CHECKPOINT_VERSION = 1

PathLike = Union[str, Path]


class FormatError(ValueError):
    """Malformed tensor or checkpoint file."""


def _coerce(array) -> np.ndarray:
    if isinstance(array, Tensor):
        array = array.data
    arr = np.asarray(array, dtype=np.float32)
    if arr.ndim > MAX_RANK:
        raise FormatError(f"rank {arr.ndim} exceeds maximum {MAX_RANK}")
    return arr


def write_tensor_stream(f: BinaryIO, array) -> None:
    arr = _coerce(array)
    f.write(TENSOR_MAGIC)
    f.write(struct.pack("<B", arr.ndim))
    for extent in arr.shape:
        f.write(struct.pack("<I", extent))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_tensor_stream(f: BinaryIO) -> np.ndarray:
    magic = f.read(4)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack("<B", f.read(1))
    if rank > MAX_RANK:
        raise FormatError(f"rank {rank} exceeds maximum {MAX_RANK}")
    shape = tuple(struct.unpack("<I", f.read(4))[0] for _ in range(rank))
    count = int(np.prod(shape)) if shape else 1
    payload = f.read(4 * count)
    if len(payload) != 4 * count:
        raise FormatError(
            f"truncated payload: expected {4 * count} bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


def write_tensor(path: PathLike, array) -> None:
    with open(path, "wb") as f:
        write_tensor_stream(f, array)


def read_tensor(path: PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor_stream(f)


def tensor_bytes(array) -> bytes:
    buf = io.BytesIO()
    write_tensor_stream(buf, array)
    return buf.getvalue()


def write_checkpoint(path: PathLike, entries: Mapping[str, object]) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<B", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(entries)))
        for name, array in entries.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            write_tensor_stream(f, array)


def read_checkpoint(path: PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<B", f.read(1))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", f.read(4))
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            entries[name] = read_tensor_stream(f)
        return entries
