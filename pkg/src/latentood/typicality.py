"""Score-curvature typicality statistic and its KDE-based anomaly score.

T(z) = ||s(z, sigma)||^2 / (-trace_estimate + eps), where the trace of the
score Jacobian is approximated with Rademacher-probe Hutchinson estimation.
A 1-D Gaussian KDE fitted on in-distribution T values turns the statistic
into a negative-log-likelihood anomaly score (higher = more OOD).

The `field` argument everywhere is any object exposing
score(z, sigma) -> (d,), score_jvp_batch(z, sigma, V) -> (K, d) and
optionally score_jvp_multi(Z, sigma, V) for batched work; DiffusionObserver
is the production implementation.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._binio import (
    read_array,
    read_exact,
    read_json_blob,
    read_magic,
    read_u64,
    write_array,
    write_json_blob,
    write_magic,
    write_u64,
)
from .errors import ArgumentError, FormatError, InsufficientDataError, NumericError, ValidationError
from .latents import LatentDataset
from .observer import DiffusionObserver, load_observer
from .rng import rademacher, sample_substream

RSCP_MAGIC = b"RSCP"
RSCP_VERSION = 1

DENSITY_FLOOR = 1e-300
_LOG_FLOOR = math.log(DENSITY_FLOOR)


@dataclass(frozen=True)
class TypicalityConfig:
    """Knobs of the T(z) pipeline; defaults are the shipped operating point."""

    sigma: float = 0.099
    probes: int = 8
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.sigma <= 0 or self.probes < 1 or self.epsilon <= 0:
            raise ArgumentError("sigma, probes, and epsilon must be positive")

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "probes": self.probes, "epsilon": self.epsilon, "seed": self.seed}

    @staticmethod
    def from_dict(d: dict) -> "TypicalityConfig":
        return TypicalityConfig(sigma=d["sigma"], probes=d["probes"], epsilon=d["epsilon"], seed=d["seed"])


def hutchinson_trace(field, z: np.ndarray, sigma: float, probes: int, seed: int) -> float:
    """Monte-Carlo estimate of tr(d score / d z) with Rademacher probes."""
    if probes < 1:
        raise ArgumentError(f"need at least one probe, got {probes}")
    z = np.asarray(z, dtype=np.float64)
    rng = sample_substream(seed, z) if z.ndim else None
    v = rademacher(rng, (probes, z.shape[-1]))
    jvps = field.score_jvp_batch(z, sigma, v)
    return float(np.mean(np.einsum("kd,kd->k", v, jvps)))


def typicality_statistic(field, z: np.ndarray, cfg: TypicalityConfig) -> float:
    """T = ||s||^2 / (-trace + eps); negative values flow through unclamped."""
    z = np.asarray(z, dtype=np.float64)
    s = field.score(z, cfg.sigma)
    if not np.isfinite(s).all():
        raise NumericError("non-finite score while computing the typicality statistic")
    tr = hutchinson_trace(field, z, cfg.sigma, cfg.probes, cfg.seed)
    if not math.isfinite(tr):
        raise NumericError("non-finite trace estimate while computing the typicality statistic")
    return float(np.dot(s, s) / (-tr + cfg.epsilon))


def _probe_bundle(rows: np.ndarray, probes: int, seed: int) -> np.ndarray:
    v = np.empty((rows.shape[0], probes, rows.shape[1]))
    for i, row in enumerate(rows):
        v[i] = rademacher(sample_substream(seed, row), (probes, rows.shape[1]))
    return v


def typicality_batch(field, rows: np.ndarray, cfg: TypicalityConfig, workers: int = 1) -> np.ndarray:
    """T for every row; each sample draws probes from its own substream.

    Substreams hash the sample's bytes, so results are independent of row
    order, chunking, and worker count, and match per-sample calls exactly.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ArgumentError(f"expected a (N, dim) matrix, got shape {rows.shape}")

    def run_chunk(chunk: np.ndarray) -> np.ndarray:
        if hasattr(field, "score_jvp_multi"):
            # one vectorized field evaluation, then per-row reductions with the
            # exact operations of the single-sample path so results match it
            v = _probe_bundle(chunk, cfg.probes, cfg.seed)
            scores, jvps = field.score_jvp_multi(chunk, cfg.sigma, v)
            if not (np.isfinite(scores).all() and np.isfinite(jvps).all()):
                raise NumericError("non-finite score or trace in batched typicality")
            out = np.empty(chunk.shape[0])
            for i in range(chunk.shape[0]):
                tr = float(np.mean(np.einsum("kd,kd->k", v[i], jvps[i])))
                out[i] = float(np.dot(scores[i], scores[i]) / (-tr + cfg.epsilon))
            return out
        return np.array([typicality_statistic(field, row, cfg) for row in chunk])

    chunk_size = 512
    chunks = [rows[i : i + chunk_size] for i in range(0, rows.shape[0], chunk_size)]
    if not chunks:
        return np.zeros(0)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    return np.concatenate(parts)


# -- KDE -----------------------------------------------------------------------


@dataclass(frozen=True)
class KdeModel:
    """1-D Gaussian-kernel mixture over the fitted sample set."""

    samples: np.ndarray
    bandwidth: float

    def logpdf(self, x):
        """Log density; scalar in, scalar out, array in, array out."""
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        h = self.bandwidth
        norm = math.log(self.samples.size) + 0.5 * math.log(2.0 * math.pi) + math.log(h)
        # chunk the query axis to bound the pairwise matrix
        out = np.empty(x.shape[0])
        step = 4096
        for i in range(0, x.shape[0], step):
            q = x[i : i + step, None]
            out[i : i + step] = logsumexp(-0.5 * np.square((q - self.samples[None, :]) / h), axis=1) - norm
        return float(out[0]) if scalar else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def nll(self, x):
        """Negative log density with the density floored at 1e-300."""
        return -np.maximum(self.logpdf(x), _LOG_FLOOR)


def fit_kde(values: np.ndarray, bandwidth: float = 0.2) -> KdeModel:
    """Fit the Gaussian-kernel mixture to 1-D samples."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 2:
        raise InsufficientDataError(f"KDE needs >= 2 values, got {values.size}")
    if not np.isfinite(values).all():
        raise ValidationError("KDE input contains non-finite values")
    if bandwidth <= 0:
        raise ArgumentError("bandwidth must be positive")
    samples = values.copy()
    samples.setflags(write=False)
    return KdeModel(samples=samples, bandwidth=float(bandwidth))


# -- fitted scorer --------------------------------------------------------------


@dataclass(frozen=True)
class TypicalityScorer:
    """Observer + config + ID-fitted KDE: score(z) = -log KDE(T(z))."""

    field: DiffusionObserver
    cfg: TypicalityConfig
    kde: KdeModel

    def score_one(self, z: np.ndarray) -> float:
        t = typicality_statistic(self.field, z, self.cfg)
        return float(self.kde.nll(t))

    def score_batch(self, rows: np.ndarray, workers: int = 1) -> np.ndarray:
        t = typicality_batch(self.field, rows, self.cfg, workers=workers)
        return self.kde.nll(t)


def fit_scorer(
    field,
    train: LatentDataset,
    cfg: TypicalityConfig | None = None,
    bandwidth: float = 0.2,
    workers: int = 1,
) -> TypicalityScorer:
    """Compute T on the ID train split and fit the KDE over those values."""
    cfg = cfg or TypicalityConfig()
    t_values = typicality_batch(field, train.rows64(), cfg, workers=workers)
    return TypicalityScorer(field=field, cfg=cfg, kde=fit_kde(t_values, bandwidth))


def rescoped_score(scorer: TypicalityScorer, z: np.ndarray) -> float:
    """Anomaly score of one latent; higher = more OOD."""
    return scorer.score_one(z)


def rescoped_score_batch(scorer: TypicalityScorer, rows: np.ndarray, workers: int = 1) -> np.ndarray:
    return scorer.score_batch(rows, workers=workers)


# -- serialization ---------------------------------------------------------------


def _sha256_file(path) -> bytes:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.digest()


def save_scorer(scorer: TypicalityScorer, path, observer_path) -> None:
    """RSCP file referencing the already-saved observer file by name + hash."""
    rel = os.path.relpath(os.fspath(observer_path), os.path.dirname(os.path.abspath(os.fspath(path))))
    with open(path, "wb") as fh:
        write_magic(fh, RSCP_MAGIC, RSCP_VERSION)
        write_json_blob(
            fh, {**scorer.cfg.to_dict(), "bandwidth": scorer.kde.bandwidth, "observer": rel}
        )
        fh.write(_sha256_file(observer_path))
        write_u64(fh, scorer.kde.samples.size)
        write_array(fh, scorer.kde.samples, "float64")


def load_scorer(path, observer_path=None) -> TypicalityScorer:
    """Load an RSCP file, resolving and hash-checking its observer."""
    spath = str(path)
    with open(path, "rb") as fh:
        read_magic(fh, RSCP_MAGIC, RSCP_VERSION, spath)
        meta = read_json_blob(fh, spath, "scorer config")
        stored_hash = read_exact(fh, 32, spath, "observer hash")
        count = read_u64(fh, spath, "sample count")
        samples = read_array(fh, count, "float64", spath, "T samples")
    if observer_path is None:
        observer_path = os.path.join(os.path.dirname(os.path.abspath(spath)), meta["observer"])
    if not os.path.exists(observer_path):
        raise FormatError(f"{spath}: referenced observer file {observer_path} not found")
    if _sha256_file(observer_path) != stored_hash:
        raise ValidationError(f"{spath}: observer file {observer_path} does not match the stored hash")
    field = load_observer(observer_path)
    cfg = TypicalityConfig.from_dict(meta)
    return TypicalityScorer(field=field, cfg=cfg, kde=fit_kde(samples, meta["bandwidth"]))
