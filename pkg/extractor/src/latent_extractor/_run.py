"""Plumbing shared by the text and vision extraction runs."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ExtractReport:
    """Summary of one completed extraction run."""

    count: int
    dim: int
    out: str
    files: tuple[str, ...]


def batches(n: int, size: int):
    """Yield (start, stop) index pairs covering range(n) in order."""
    for start in range(0, n, size):
        yield start, min(start + size, n)
