"""Detection metrics over ID/OOD score arrays, plus sweep-curve aggregation.

Convention everywhere: higher score = more OOD. AUROC uses the tie-aware
Mann-Whitney rank form; DTACC maximizes balanced accuracy over midpoint
thresholds; AUIN/AUOUT are step-wise precision-recall areas with ID
(ascending rank) and OOD (descending rank) as the respective positive class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError, InsufficientDataError, ValidationError
from .rng import generator


def _as_scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite scores")
    return arr


@dataclass(frozen=True)
class ScoredPair:
    """ID and OOD score arrays for one evaluation pairing."""

    id_scores: np.ndarray
    ood_scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "id_scores", _as_scores(self.id_scores, "id_scores"))
        object.__setattr__(self, "ood_scores", _as_scores(self.ood_scores, "ood_scores"))


@dataclass(frozen=True)
class MetricBundle:
    auroc: float
    dtacc: float
    auin: float
    auout: float

    def to_dict(self) -> dict:
        return {"auroc": self.auroc, "dtacc": self.dtacc, "auin": self.auin, "auout": self.auout}


def auroc(pair: ScoredPair) -> float:
    """P(random OOD score > random ID score), ties counted half."""
    ids, oods = pair.id_scores, pair.ood_scores
    ranks = rankdata(np.concatenate([oods, ids]))
    u = ranks[: oods.size].sum() - oods.size * (oods.size + 1) / 2.0
    return float(u / (ids.size * oods.size))


def dtacc(pair: ScoredPair) -> float:
    """Max over thresholds of (P(ID <= t) + P(OOD > t)) / 2.

    Thresholds are the midpoints of adjacent sorted unique scores plus the
    two infinities; scores are finite so the infinities never tie.
    """
    ids = np.sort(pair.id_scores)
    oods = np.sort(pair.ood_scores)
    uniq = np.unique(np.concatenate([ids, oods]))
    thresholds = np.concatenate([[-np.inf], (uniq[:-1] + uniq[1:]) / 2.0, [np.inf]])
    frac_id = np.searchsorted(ids, thresholds, side="right") / ids.size
    frac_ood = 1.0 - np.searchsorted(oods, thresholds, side="right") / oods.size
    return float(((frac_id + frac_ood) / 2.0).max())


def _stepwise_pr_area(labels: np.ndarray, order_scores: np.ndarray) -> float:
    """Area under the step PR curve: sum of precision * recall increments.

    `labels` marks positives; ranking is by descending `order_scores` with
    ties consumed as one group.
    """
    order = np.argsort(-order_scores, kind="stable")
    labels = labels[order]
    scores = order_scores[order]
    boundaries = np.flatnonzero(np.diff(scores)) + 1
    group_ends = np.append(boundaries, labels.size)
    tp = np.cumsum(labels)[group_ends - 1]
    total = tp[-1]
    predicted = group_ends
    precision = tp / predicted
    recall = tp / total
    return float(np.sum(np.diff(recall, prepend=0.0) * precision))


def au_pr(pair: ScoredPair, positive: str) -> float:
    """AUOUT: positive='ood', rank by descending score. AUIN: positive='id', ascending."""
    ids, oods = pair.id_scores, pair.ood_scores
    scores = np.concatenate([ids, oods])
    is_ood = np.concatenate([np.zeros(ids.size, bool), np.ones(oods.size, bool)])
    if positive == "ood":
        return _stepwise_pr_area(is_ood, scores)
    if positive == "id":
        return _stepwise_pr_area(~is_ood, -scores)
    raise ArgumentError(f"positive must be 'id' or 'ood', got {positive!r}")


def bundle(pair: ScoredPair) -> MetricBundle:
    return MetricBundle(
        auroc=auroc(pair),
        dtacc=dtacc(pair),
        auin=au_pr(pair, "id"),
        auout=au_pr(pair, "ood"),
    )


def iqm(values) -> float:
    """Mean of values within the 25th..75th percentiles inclusive.

    Linear-interpolation percentiles; if the trimmed set comes up empty the
    median stands in.
    """
    arr = _as_scores(values, "iqm input")
    lo, hi = np.percentile(arr, [25.0, 75.0])
    kept = arr[(arr >= lo) & (arr <= hi)]
    if kept.size == 0:
        return float(np.median(arr))
    return float(kept.mean())


def bootstrap_ci(
    curves, level: float = 0.95, resamples: int = 2000, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Percentile bootstrap of the per-grid-point IQM over configurations.

    curves: (num_configs, grid_len) matrix of normalized values. Returns
    (low, high) arrays of length grid_len.
    """
    curves = np.asarray(curves, dtype=np.float64)
    if curves.ndim != 2:
        raise ArgumentError(f"expected a (configs, grid) matrix, got shape {curves.shape}")
    if curves.shape[0] < 2:
        raise InsufficientDataError(f"bootstrap needs >= 2 curves, got {curves.shape[0]}")
    if not 0.0 < level < 1.0:
        raise ArgumentError("level must be in (0, 1)")
    num_configs, grid_len = curves.shape
    rng = generator(seed, 0xB007)
    stats = np.empty((resamples, grid_len))
    for r in range(resamples):
        picked = curves[rng.integers(0, num_configs, size=num_configs)]
        for g in range(grid_len):
            stats[r, g] = iqm(picked[:, g])
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(stats, [tail, 100.0 - tail], axis=0)
    return low, high
