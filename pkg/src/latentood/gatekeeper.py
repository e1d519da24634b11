"""Prefill-stage gate: score accumulating prefix means against a threshold.

Each prefix k = 1..L is pooled with prefix_smp_pool and scored by a fitted
detector; a score above the calibrated ID percentile raises that token's
flag. The binding decision uses the full-utterance score only (k = L);
earlier flags are monitoring signals, and flags inside the minimum-prefix
window are marked advisory.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, InsufficientDataError, ValidationError
from .latents import TokenSequence, prefix_smp_all
from .mahalanobis import MahalanobisModel, score_global
from .typicality import TypicalityScorer

DEFAULT_PERCENTILE = 99.0
DEFAULT_MIN_PREFIX = 3


@dataclass(frozen=True)
class GateConfig:
    """Calibrated threshold plus the policy knobs that produced it."""

    threshold: float
    percentile: float = DEFAULT_PERCENTILE
    min_prefix: int = DEFAULT_MIN_PREFIX

    def __post_init__(self):
        if not 0.0 < self.percentile < 100.0:
            raise ArgumentError(f"percentile must be in (0, 100), got {self.percentile}")
        if self.min_prefix < 1:
            raise ArgumentError(f"min_prefix must be >= 1, got {self.min_prefix}")
        if not np.isfinite(self.threshold):
            raise ValidationError("threshold must be finite")


@dataclass(frozen=True)
class GateTrace:
    """Per-token scores/flags and the full-utterance decision.

    Positions before the first unmasked token have no pooled latent: their
    score is NaN, the flag stays down, and they are always advisory.
    """

    scores: np.ndarray
    over_threshold: np.ndarray
    advisory: np.ndarray
    latency_s: np.ndarray
    decision: str
    threshold: float

    @property
    def length(self) -> int:
        return self.scores.shape[0]

    @property
    def rejected(self) -> bool:
        return self.decision == "reject"


def calibrate_threshold(id_scores, percentile: float = DEFAULT_PERCENTILE) -> float:
    """Linear-interpolation empirical percentile of the ID scores."""
    scores = np.asarray(id_scores, dtype=np.float64).ravel()
    if scores.size < 10:
        raise InsufficientDataError(f"calibration needs >= 10 scores, got {scores.size}")
    if not np.isfinite(scores).all():
        raise ValidationError("calibration scores contain non-finite values")
    if not 0.0 < percentile < 100.0:
        raise ArgumentError(f"percentile must be in (0, 100), got {percentile}")
    return float(np.percentile(scores, percentile))


def _score_one_fn(detector):
    if isinstance(detector, TypicalityScorer):
        return detector.score_one
    if isinstance(detector, MahalanobisModel):
        return lambda z: score_global(detector, z)
    if callable(detector):
        return detector
    raise ArgumentError(f"unsupported detector type {type(detector).__name__}")


def gate_sequence(seq: TokenSequence, detector, cfg: GateConfig) -> GateTrace:
    """Score every prefix mean; decide on the k = L score only."""
    score_fn = _score_one_fn(detector)
    means, valid = prefix_smp_all(seq)
    length = seq.length
    scores = np.full(length, np.nan)
    over = np.zeros(length, dtype=bool)
    latency = np.zeros(length)
    for k in range(length):
        if not valid[k]:
            continue
        start = time.perf_counter()
        scores[k] = score_fn(means[k])
        latency[k] = time.perf_counter() - start
        over[k] = scores[k] > cfg.threshold
    advisory = (np.arange(1, length + 1) < cfg.min_prefix) | ~valid
    decision = "reject" if over[length - 1] else "accept"
    for arr in (scores, over, advisory, latency):
        arr.setflags(write=False)
    return GateTrace(
        scores=scores,
        over_threshold=over,
        advisory=advisory,
        latency_s=latency,
        decision=decision,
        threshold=cfg.threshold,
    )
