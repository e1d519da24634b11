"""Shared fixtures: synthetic datasets, analytic score fields, and the two
session-scoped trained observers that the heavier tests reuse.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy.special import logsumexp

import latentood as lo
from latentood.observer import TrainConfig, train_observer, untrained_observer

DIM_MIX = 8
MIX_MEANS = np.zeros((2, DIM_MIX))
MIX_MEANS[0, 0] = -2.0
MIX_MEANS[1, 0] = 2.0
# 4 marginal standard deviations along the bimodal axis; the marginal
# variance there is 1 (component) + 4 (mean spread) = 5, and the shifted
# modes land 4.9 component sigmas past the nearer ID mode.
OOD_SHIFT = np.zeros(DIM_MIX)
OOD_SHIFT[0] = 4.0 * np.sqrt(5.0)


def make_dataset(rows, tag: str = "") -> lo.LatentDataset:
    return lo.LatentDataset(rows=np.asarray(rows, dtype=np.float32), tag=tag)


class StandardNormalField:
    """Analytic score field of N(0, I): s(z) = -z, Jacobian = -I."""

    def score(self, z, sigma):
        return -np.asarray(z, dtype=np.float64)

    def score_jvp_batch(self, z, sigma, tangents):
        return -np.asarray(tangents, dtype=np.float64)

    def score_jvp_multi(self, rows, sigma, tangents):
        return -np.asarray(rows, dtype=np.float64), -np.asarray(tangents, dtype=np.float64)


class LinearField:
    """s(z) = A z; exact trace is tr(A)."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=np.float64)

    def score(self, z, sigma):
        return np.asarray(z, dtype=np.float64) @ self.a.T

    def score_jvp_batch(self, z, sigma, tangents):
        return np.asarray(tangents, dtype=np.float64) @ self.a.T

    def score_jvp_multi(self, rows, sigma, tangents):
        rows = np.asarray(rows, dtype=np.float64)
        return rows @ self.a.T, np.asarray(tangents, dtype=np.float64) @ self.a.T


def sample_mixture(rng: np.random.Generator, n: int) -> np.ndarray:
    comp = rng.integers(0, 2, size=n)
    return MIX_MEANS[comp] + rng.normal(size=(n, DIM_MIX))


def mixture_logpdf(rows: np.ndarray) -> np.ndarray:
    """log of the equal-weight two-component unit-covariance mixture."""
    rows = np.asarray(rows, dtype=np.float64)
    sq = np.stack([np.sum((rows - mu) ** 2, axis=1) for mu in MIX_MEANS])
    log_norm = 0.5 * DIM_MIX * np.log(2.0 * np.pi)
    return logsumexp(-0.5 * sq, axis=0) - np.log(2.0) - log_norm


@pytest.fixture(scope="session")
def toy2d():
    """d=2 standard-normal data and a 20k-step observer trained on it."""
    rng = np.random.default_rng(101)
    train = make_dataset(rng.normal(size=(10_000, 2)), tag="toy2d-train")
    cfg = TrainConfig(steps=20_000, batch=128, width=64, depth=3, emb_dim=32, seed=11)
    start = time.monotonic()
    observer = train_observer(train, cfg)
    seconds = time.monotonic() - start
    return {"train": train, "observer": observer, "seconds": seconds, "rng_tail": rng}


@pytest.fixture(scope="session")
def mix8d():
    """Two-Gaussian d=8 mixture splits, an OOD set shifted 4 marginal sigmas
    along the bimodal axis, and a 20k-step observer trained on the ID train
    split."""
    rng = np.random.default_rng(202)
    train = make_dataset(sample_mixture(rng, 4000), tag="mix8d-train")
    id_test = make_dataset(sample_mixture(rng, 1000), tag="mix8d-id-test")
    ood_test = make_dataset(sample_mixture(rng, 1000) + OOD_SHIFT, tag="mix8d-ood-test")
    cfg = TrainConfig(steps=20_000, batch=128, width=128, depth=4, emb_dim=64, seed=22)
    start = time.monotonic()
    observer = train_observer(train, cfg)
    seconds = time.monotonic() - start
    return {
        "train": train,
        "id_test": id_test,
        "ood_test": ood_test,
        "observer": observer,
        "seconds": seconds,
    }


@pytest.fixture(scope="session")
def wide_observer():
    """Untrained observer at the shipped architecture on d=2560 latents."""
    rng = np.random.default_rng(303)
    train = make_dataset(rng.normal(size=(8, 2560)), tag="wide-train")
    return untrained_observer(train, TrainConfig(seed=5))
