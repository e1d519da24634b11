"""Latent dataset I/O and sequence pooling.

The on-disk LTNT format is the universal exchange currency of the toolkit:

    magic "LTNT" (4 bytes) | u32 version=1 | u32 count | u32 dim |
    count*dim little-endian IEEE-754 float32, row-major

Rows live in memory as float32 (the disk precision); detectors upcast to
float64 when they fit. A plain-text CSV fallback covers hand-written fixtures.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ._binio import read_array, read_exact, read_magic, write_array, write_magic
from .errors import (
    ArgumentError,
    CorruptionError,
    DegenerateInputError,
    ValidationError,
)

LTNT_MAGIC = b"LTNT"
LTNT_VERSION = 1
CSV_MAX_ROWS = 1000


@dataclass(frozen=True)
class LatentDataset:
    """A count x dim matrix of embedding vectors plus provenance.

    Immutable after construction; every row is finite and exactly `dim` wide.
    """

    rows: np.ndarray
    tag: str = ""

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise ValidationError(f"latent rows must be 2-D, got shape {rows.shape}")
        if rows.shape[1] < 1:
            raise ValidationError("embedding dimension must be positive")
        _check_finite_rows(rows)
        rows = np.ascontiguousarray(rows)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def rows64(self) -> np.ndarray:
        """Float64 view for numerical work (disk precision stays float32)."""
        return self.rows.astype(np.float64)


@dataclass(frozen=True)
class TokenSequence:
    """Per-token hidden states with a non-padding mask."""

    hidden: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        hidden = np.asarray(self.hidden, dtype=np.float64)
        if hidden.ndim != 2 or hidden.shape[0] < 1:
            raise ValidationError(f"hidden states must be a non-empty 2-D matrix, got {hidden.shape}")
        if not np.isfinite(hidden).all():
            raise ValidationError("hidden states contain non-finite entries")
        mask = self.mask
        if mask is None:
            mask = np.ones(hidden.shape[0], dtype=np.int64)
        mask = np.asarray(mask)
        if mask.ndim != 1 or mask.shape[0] != hidden.shape[0]:
            raise ValidationError(
                f"mask length {mask.shape} does not match {hidden.shape[0]} hidden rows"
            )
        if not np.isin(mask, (0, 1)).all():
            raise ValidationError("mask entries must be 0 or 1")
        if int(mask.sum()) == 0:
            raise ValidationError("sequence mask has no non-padding token")
        mask = np.ascontiguousarray(mask.astype(np.int64))
        hidden = np.ascontiguousarray(hidden)
        hidden.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "hidden", hidden)
        object.__setattr__(self, "mask", mask)

    @property
    def length(self) -> int:
        return self.hidden.shape[0]

    @property
    def dim(self) -> int:
        return self.hidden.shape[1]


def _check_finite_rows(rows: np.ndarray) -> None:
    finite = np.isfinite(rows).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise ValidationError(f"row {bad} contains a non-finite entry")


def write_latents(dataset: LatentDataset, path) -> None:
    """Write an LTNT file readable back bit-exactly by read_latents."""
    with open(path, "wb") as fh:
        write_magic(fh, LTNT_MAGIC, LTNT_VERSION)
        fh.write(struct.pack("<II", dataset.count, dataset.dim))
        write_array(fh, dataset.rows, "float32")


def read_latents(path, tag: str = "") -> LatentDataset:
    """Read an LTNT file, validating header, payload size, and finiteness."""
    spath = str(path)
    with open(path, "rb") as fh:
        read_magic(fh, LTNT_MAGIC, LTNT_VERSION, spath)
        count, dim = struct.unpack("<II", read_exact(fh, 8, spath, "header"))
        if dim < 1:
            raise CorruptionError(f"{spath}: header declares dim={dim}")
        rows = read_array(fh, count * dim, "float32", spath, "payload").reshape(count, dim)
        if fh.read(1):
            raise CorruptionError(f"{spath}: trailing bytes after declared payload")
    try:
        return LatentDataset(rows=rows, tag=tag or spath)
    except ValidationError as exc:
        raise ValidationError(f"{spath}: {exc}") from exc


def read_latents_csv(path, tag: str = "") -> LatentDataset:
    """CSV fallback for hand-written fixtures: one row per line, comma-separated."""
    spath = str(path)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValidationError(f"{spath}:{lineno}: unparseable value ({exc})") from exc
    if not rows:
        raise ValidationError(f"{spath}: CSV fallback needs at least one row")
    if len(rows) > CSV_MAX_ROWS:
        raise ValidationError(f"{spath}: CSV fallback is capped at {CSV_MAX_ROWS} rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{spath}: ragged rows (widths {sorted(widths)})")
    return LatentDataset(rows=np.asarray(rows, dtype=np.float32), tag=tag or spath)


def _prefix_sums(seq: TokenSequence) -> tuple[np.ndarray, np.ndarray]:
    # cumsum is a strictly sequential accumulation, so the k=L prefix and the
    # full-sequence pool share one summation order exactly
    masked = seq.hidden * seq.mask[:, None].astype(np.float64)
    return np.cumsum(masked, axis=0), np.cumsum(seq.mask)


def smp_pool(seq: TokenSequence) -> np.ndarray:
    """Sequence mean pool: mean of non-padding hidden states."""
    sums, counts = _prefix_sums(seq)
    return sums[-1] / counts[-1]


def prefix_smp_pool(seq: TokenSequence, k: int) -> np.ndarray:
    """Mean of non-padding hidden states among the first k positions."""
    if not 1 <= k <= seq.length:
        raise ArgumentError(f"prefix length {k} outside 1..{seq.length}")
    sums, counts = _prefix_sums(seq)
    if counts[k - 1] == 0:
        raise DegenerateInputError(f"first {k} tokens are all masked")
    return sums[k - 1] / counts[k - 1]


def prefix_smp_all(seq: TokenSequence) -> tuple[np.ndarray, np.ndarray]:
    """All running prefix means in one pass.

    Returns (means, valid) where means[k-1] is the prefix pool at length k and
    valid[k-1] is False while no unmasked token has been seen yet (the
    corresponding mean row is NaN).
    """
    sums, counts = _prefix_sums(seq)
    valid = counts > 0
    denom = np.where(valid, counts, 1).astype(np.float64)
    means = sums / denom[:, None]
    means[~valid] = np.nan
    return means, valid
