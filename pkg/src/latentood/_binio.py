"""Low-level helpers for the fixed binary model/dataset formats.

All formats share the same skeleton: 4-byte ASCII magic, u32 version, then
format-specific fields. Integers are little-endian; floats are IEEE-754
little-endian (f32 or f64 as documented per format).
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

from .errors import CorruptionError, FormatError


def write_magic(fh: BinaryIO, magic: bytes, version: int) -> None:
    assert len(magic) == 4
    fh.write(magic)
    fh.write(struct.pack("<I", version))


def read_magic(fh: BinaryIO, magic: bytes, version: int, path: str) -> None:
    head = fh.read(8)
    if len(head) < 8 or head[:4] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} magic, found {head[:4]!r}")
    (ver,) = struct.unpack("<I", head[4:8])
    if ver != version:
        raise FormatError(f"{path}: unsupported {magic.decode()} version {ver} (expected {version})")


def read_exact(fh: BinaryIO, n: int, path: str, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptionError(f"{path}: truncated {what} (wanted {n} bytes, got {len(buf)})")
    return buf


def write_u32(fh: BinaryIO, *values: int) -> None:
    fh.write(struct.pack(f"<{len(values)}I", *values))


def read_u32(fh: BinaryIO, count: int, path: str, what: str) -> tuple[int, ...]:
    return struct.unpack(f"<{count}I", read_exact(fh, 4 * count, path, what))


def write_u64(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<Q", value))


def read_u64(fh: BinaryIO, path: str, what: str) -> int:
    return struct.unpack("<Q", read_exact(fh, 8, path, what))[0]


def write_f64(fh: BinaryIO, *values: float) -> None:
    fh.write(struct.pack(f"<{len(values)}d", *values))


def read_f64(fh: BinaryIO, count: int, path: str, what: str) -> tuple[float, ...]:
    return struct.unpack(f"<{count}d", read_exact(fh, 8 * count, path, what))


def write_array(fh: BinaryIO, arr: np.ndarray, dtype: str) -> None:
    fh.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())


def read_array(fh: BinaryIO, count: int, dtype: str, path: str, what: str) -> np.ndarray:
    dt = np.dtype(dtype).newbyteorder("<")
    buf = read_exact(fh, count * dt.itemsize, path, what)
    return np.frombuffer(buf, dtype=dt).astype(np.dtype(dtype), copy=True)


def write_json_blob(fh: BinaryIO, obj) -> None:
    # sorted keys keep fit-twice-same-seed outputs byte-identical
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    write_u32(fh, len(blob))
    fh.write(blob)


def read_json_blob(fh: BinaryIO, path: str, what: str):
    (n,) = read_u32(fh, 1, path, f"{what} length")
    return json.loads(read_exact(fh, n, path, what).decode("utf-8"))
