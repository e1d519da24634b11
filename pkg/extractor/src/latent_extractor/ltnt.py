"""Writer for the LTNT latent exchange format.

The detector toolkit consumes latents from disk in a fixed binary layout:

    magic "LTNT" (4 bytes) | u32 version=1 | u32 count | u32 dim |
    count*dim little-endian IEEE-754 float32, row-major

The byte layout, not a shared library, is the contract between extraction
and detection, so this module implements the format independently. Writes
are staged to a temporary file in the target directory and renamed into
place; a crash never leaves a truncated or partial file behind.

Run provenance (backbone, dataset, split, pooling, resize mode) travels in a
JSON sidecar next to the latents: the binary format has no room for it, and
appending anything would make the file unreadable downstream.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

LTNT_MAGIC = b"LTNT"
LTNT_VERSION = 1
_HEADER = struct.Struct("<III")  # version, count, dim


def _as_rows(rows) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(rows, dtype=np.float32))
    if arr.ndim != 2:
        raise FormatError(f"latents must be a 2-d array, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise FormatError("latents need at least one dimension per row")
    if not np.isfinite(arr).all():
        raise FormatError("latents contain NaN or infinite values")
    return arr


def _replace_atomic(payload: bytes, path: Path) -> None:
    # Stage in the same directory so os.replace stays a same-filesystem rename.
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_ltnt(path: str | os.PathLike, rows) -> None:
    """Write rows (count, dim) to path, atomically."""
    arr = _as_rows(rows)
    payload = LTNT_MAGIC + _HEADER.pack(LTNT_VERSION, arr.shape[0], arr.shape[1])
    _replace_atomic(payload + arr.tobytes(), Path(path))


def read_ltnt(path: str | os.PathLike) -> np.ndarray:
    """Read an LTNT file back as a float32 (count, dim) array.

    Strict: unknown magic, unknown version, a short payload, or trailing
    bytes all raise. This keeps our own round-trip honest and doubles as a
    self-check that the written files obey the layout.
    """
    blob = Path(path).read_bytes()
    if len(blob) < 4 + _HEADER.size:
        raise FormatError(f"{path}: file shorter than the LTNT header")
    if blob[:4] != LTNT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {LTNT_MAGIC!r}")
    version, count, dim = _HEADER.unpack_from(blob, 4)
    if version != LTNT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim < 1:
        raise FormatError(f"{path}: dim must be positive, got {dim}")
    expected = 4 + _HEADER.size + 4 * count * dim
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload is {len(blob)} bytes, header implies {expected}"
        )
    arr = np.frombuffer(blob, dtype="<f4", offset=4 + _HEADER.size)
    return arr.reshape(count, dim).copy()


def write_mask(path: str | os.PathLike, mask) -> None:
    """Write a 0/1 token mask as whitespace-separated integers, one per row."""
    flags = np.asarray(mask)
    if flags.ndim != 1:
        raise FormatError(f"mask must be 1-d, got shape {flags.shape}")
    if not np.isin(flags, (0, 1)).all():
        raise FormatError("mask entries must be 0 or 1")
    text = " ".join(str(int(flag)) for flag in flags) + "\n"
    _replace_atomic(text.encode("ascii"), Path(path))


def write_meta(path: str | os.PathLike, meta: dict) -> None:
    """Write the run provenance sidecar. Keys are sorted for stable bytes."""
    text = json.dumps(meta, indent=2, sort_keys=True) + "\n"
    _replace_atomic(text.encode("utf-8"), Path(path))


def meta_path(out: str | os.PathLike) -> Path:
    # Appending keeps the association unambiguous for any output name.
    return Path(str(out) + ".meta.json")
