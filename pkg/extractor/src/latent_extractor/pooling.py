"""Sequence pooling applied at extraction time.

A sequence's latent is the mean of its non-padding token hidden states from
the final encoder layer. Pooling runs in float64 regardless of the model
dtype; the float32 cast happens once, at the disk boundary.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError


def masked_mean(hidden: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mean of hidden (length, dim) over positions where mask is 1."""
    h = np.asarray(hidden, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if h.ndim != 2:
        raise ArgumentError(f"hidden must be 2-d, got shape {h.shape}")
    if m.shape != (h.shape[0],):
        raise ArgumentError(
            f"mask shape {m.shape} does not match {h.shape[0]} positions"
        )
    total = m.sum()
    if total == 0:
        raise ArgumentError("mask selects no positions")
    return (h * m[:, None]).sum(axis=0) / total


def masked_mean_batch(hidden: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise masked means for a padded batch (n, length, dim)."""
    h = np.asarray(hidden, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if h.ndim != 3 or m.shape != h.shape[:2]:
        raise ArgumentError(
            f"expected hidden (n, length, dim) with mask (n, length), "
            f"got {h.shape} and {m.shape}"
        )
    totals = m.sum(axis=1)
    if (totals == 0).any():
        raise ArgumentError("mask selects no positions for at least one sequence")
    return (h * m[:, :, None]).sum(axis=1) / totals[:, None]
