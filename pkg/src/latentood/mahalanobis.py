"""Covariance-based latent-space detectors.

The label-free global detector fits one Gaussian to all ID train latents and
scores S_global(z) = (z - mu)' inv(Sigma + ridge I) (z - mu). The labeled
baseline keeps per-class means with a shared pooled covariance and scores the
minimum squared distance over classes. Both use the 1/N covariance
normalization and never form an explicit inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._binio import (
    read_array,
    read_f64,
    read_magic,
    read_u32,
    read_u64,
    write_array,
    write_f64,
    write_magic,
    write_u32,
    write_u64,
)
from .errors import (
    ConditioningError,
    InsufficientDataError,
    NotPositiveDefiniteError,
    ShapeError,
    ValidationError,
)
from .latents import LatentDataset
from .linalg import CholeskyFactor, cholesky

MAHA_MAGIC = b"MAHA"
MAHA_VERSION = 1

DEFAULT_RIDGE = 1e-4
RIDGE_RETRIES = 3


def _escalating_cholesky(cov: np.ndarray, ridge: float) -> CholeskyFactor:
    """Factor cov + ridge I, escalating the ridge x10 up to RIDGE_RETRIES times."""
    attempt = ridge
    for _ in range(RIDGE_RETRIES + 1):
        try:
            return cholesky(cov, ridge=attempt)
        except NotPositiveDefiniteError:
            attempt *= 10.0
    raise ConditioningError(
        f"covariance not factorable after escalating ridge from {ridge:g} to {attempt / 10.0:g}"
    )


@dataclass(frozen=True)
class MahalanobisModel:
    """Global Gaussian fit: mean, factored ridged covariance, and fit metadata.

    `ridge` is the requested value; `factor.ridge` holds the effective one
    after any escalation.
    """

    mean: np.ndarray
    factor: CholeskyFactor
    ridge: float
    fit_count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def ridge_effective(self) -> float:
        return self.factor.ridge


@dataclass(frozen=True)
class ClassConditionalModel:
    """Per-class means with a shared pooled covariance factor."""

    means: np.ndarray
    factor: CholeskyFactor
    ridge: float
    class_counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


STD_FLOOR = 1e-6


def fit_global(
    train: LatentDataset, ridge: float = DEFAULT_RIDGE, standardize: bool = False
) -> MahalanobisModel:
    """Sample mean and 1/N covariance of the train split, plus ridge.

    standardize=True runs the fit in per-dimension standardized coordinates
    (the ridge then regularizes that space) and folds the scaling back into
    the stored factor, so scoring still takes raw latents.
    """
    if train.count < 2:
        raise InsufficientDataError(f"global fit needs >= 2 latents, got {train.count}")
    if ridge <= 0:
        raise ValidationError("ridge must be positive")
    rows = train.rows64()
    mean = rows.mean(axis=0)
    scale = None
    if standardize:
        scale = np.maximum(rows.std(axis=0), STD_FLOOR)
        rows = (rows - mean) / scale
        centered = rows - rows.mean(axis=0)
    else:
        centered = rows - mean
    cov = centered.T @ centered / train.count
    factor = _escalating_cholesky(cov, ridge)
    if standardize:
        # x' (S L L' S)^-1 x on raw offsets == standardized-space quad form
        factor = CholeskyFactor(lower=scale[:, None] * factor.lower, ridge=factor.ridge)
    mean = mean.copy()
    mean.setflags(write=False)
    return MahalanobisModel(mean=mean, factor=factor, ridge=float(ridge), fit_count=train.count)


def score_global(model: MahalanobisModel, z: np.ndarray) -> float:
    """Squared Mahalanobis distance of one latent; higher = more OOD."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.dim,):
        raise ShapeError(f"latent shape {z.shape} != (dim,) = ({model.dim},)")
    return model.factor.quad_form(z - model.mean)


def score_global_batch(model: MahalanobisModel, rows: np.ndarray) -> np.ndarray:
    """score_global for each row of a (N, dim) matrix."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.dim:
        raise ShapeError(f"batch shape {rows.shape} incompatible with dim {model.dim}")
    return model.factor.quad_form(rows - model.mean)


def fit_class_conditional(
    train: LatentDataset, labels: np.ndarray, ridge: float = DEFAULT_RIDGE
) -> ClassConditionalModel:
    """Per-class means and the pooled within-class 1/N covariance."""
    labels = np.asarray(labels)
    if labels.shape != (train.count,):
        raise ShapeError(f"labels shape {labels.shape} != (count,) = ({train.count},)")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValidationError("labels must be integers in 1..C")
    if labels.size and labels.min() < 1:
        raise ValidationError("labels must be integers in 1..C")
    num_classes = int(labels.max(initial=0))
    counts = np.bincount(labels, minlength=num_classes + 1)[1:]
    empty = np.flatnonzero(counts == 0)
    if num_classes == 0 or empty.size:
        missing = ", ".join(str(c + 1) for c in empty) or "all"
        raise ValidationError(f"every class needs >= 1 sample; empty: {missing}")
    rows = train.rows64()
    means = np.empty((num_classes, train.dim))
    scatter = np.zeros((train.dim, train.dim))
    for c in range(num_classes):
        members = rows[labels == c + 1]
        means[c] = members.mean(axis=0)
        centered = members - means[c]
        scatter += centered.T @ centered
    cov = scatter / train.count
    factor = _escalating_cholesky(cov, ridge)
    means.setflags(write=False)
    counts = counts.copy()
    counts.setflags(write=False)
    return ClassConditionalModel(means=means, factor=factor, ridge=float(ridge), class_counts=counts)


def score_class_conditional(model: ClassConditionalModel, z: np.ndarray) -> float:
    """Minimum squared distance to any class mean under the shared covariance."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.dim,):
        raise ShapeError(f"latent shape {z.shape} != (dim,) = ({model.dim},)")
    return float(model.factor.quad_form(z - model.means).min())


def score_class_conditional_batch(model: ClassConditionalModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.dim:
        raise ShapeError(f"batch shape {rows.shape} incompatible with dim {model.dim}")
    per_class = np.stack([model.factor.quad_form(rows - mu) for mu in model.means])
    return per_class.min(axis=0)


def save_model(model: MahalanobisModel, path) -> None:
    """MAHA binary: header, requested/effective ridge, mean, packed factor."""
    dim = model.dim
    tril = np.tril_indices(dim)
    with open(path, "wb") as fh:
        write_magic(fh, MAHA_MAGIC, MAHA_VERSION)
        write_u32(fh, dim)
        write_u64(fh, model.fit_count)
        write_f64(fh, model.ridge)
        write_f64(fh, model.ridge_effective)
        write_array(fh, model.mean, "float64")
        write_array(fh, model.factor.lower[tril], "float64")


def load_model(path) -> MahalanobisModel:
    spath = str(path)
    with open(path, "rb") as fh:
        read_magic(fh, MAHA_MAGIC, MAHA_VERSION, spath)
        (dim,) = read_u32(fh, 1, spath, "dim")
        fit_count = read_u64(fh, spath, "fit count")
        (ridge,) = read_f64(fh, 1, spath, "ridge")
        (ridge_eff,) = read_f64(fh, 1, spath, "effective ridge")
        mean = read_array(fh, dim, "float64", spath, "mean")
        packed = read_array(fh, dim * (dim + 1) // 2, "float64", spath, "factor")
    lower = np.zeros((dim, dim))
    lower[np.tril_indices(dim)] = packed
    lower.setflags(write=False)
    mean = mean.copy()
    mean.setflags(write=False)
    factor = CholeskyFactor(lower=lower, ridge=ridge_eff)
    return MahalanobisModel(mean=mean, factor=factor, ridge=ridge, fit_count=fit_count)
