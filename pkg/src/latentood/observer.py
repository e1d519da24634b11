"""Lightweight latent diffusion observer.

A denoiser D(x, sigma) = c_skip(sigma) x + c_out(sigma) F(c_in(sigma) x,
c_noise(sigma)) is trained on in-distribution latents with the sigma-weighted
denoising objective; the score field it exposes is s(x, sigma) =
(D(x, sigma) - x) / sigma^2. Latents are standardized by a normalizer fitted
on the training split, and all scoring happens in that normalized space.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from ._binio import (
    read_array,
    read_f64,
    read_json_blob,
    read_magic,
    read_u32,
    write_array,
    write_f64,
    write_json_blob,
    write_magic,
    write_u32,
)
from .errors import ArgumentError, InsufficientDataError, ShapeError, TrainingError
from .latents import LatentDataset
from .rng import generator

EDMO_MAGIC = b"EDMO"
EDMO_VERSION = 1

STD_FLOOR = 1e-6


# -- preconditioning ---------------------------------------------------------


def c_skip(sigma, sigma_data: float):
    return sigma_data**2 / (np.square(sigma) + sigma_data**2)


def c_out(sigma, sigma_data: float):
    return sigma * sigma_data / np.sqrt(np.square(sigma) + sigma_data**2)


def c_in(sigma, sigma_data: float):
    return 1.0 / np.sqrt(np.square(sigma) + sigma_data**2)


def c_noise(sigma):
    return np.log(sigma) / 4.0


def loss_weight(sigma, sigma_data: float):
    return (np.square(sigma) + sigma_data**2) / np.square(sigma * sigma_data)


# -- normalizer ---------------------------------------------------------------


@dataclass(frozen=True)
class Normalizer:
    """Per-dimension affine standardization fitted on ID train latents."""

    mean: np.ndarray
    std: np.ndarray

    def normalize(self, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_normalizer(train: LatentDataset) -> Normalizer:
    """Per-dimension mean/std of the train split, std floored at 1e-6."""
    if train.count < 2:
        raise InsufficientDataError(f"normalizer needs >= 2 rows, got {train.count}")
    rows = train.rows64()
    mean = rows.mean(axis=0)
    std = np.maximum(rows.std(axis=0), STD_FLOOR)
    return Normalizer(mean=mean, std=std)


# -- training -----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Observer training schedule; defaults follow the shipped detector recipe."""

    steps: int = 150_000
    batch: int = 256
    lr: float = 3e-4
    seed: int = 0
    p_mean: float = -1.2
    p_std: float = 1.2
    width: int = 1024
    depth: int = 6
    emb_dim: int = 256
    sigma_data: float = 1.0
    checkpoint_path: str | None = None
    checkpoint_every: int = 10_000

    def __post_init__(self):
        if self.steps < 0 or self.batch < 1 or self.lr <= 0 or self.p_std <= 0:
            raise ArgumentError("training config values must be positive")
        if self.width < 1 or self.depth < 1 or self.emb_dim < 2 or self.sigma_data <= 0:
            raise ArgumentError("architecture config values must be positive")

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "batch": self.batch,
            "lr": self.lr,
            "seed": self.seed,
            "p_mean": self.p_mean,
            "p_std": self.p_std,
            "width": self.width,
            "depth": self.depth,
            "emb_dim": self.emb_dim,
            "sigma_data": self.sigma_data,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**{k: d[k] for k in TrainConfig().to_dict().keys()})


@dataclass
class DiffusionObserver:
    """Trained denoiser plus its normalizer; immutable once trained.

    score / score_jvp / score_jvp_batch form the field interface the
    typicality layer consumes; anything exposing the same three methods can
    stand in for an observer there.
    """

    params: nn.MlpParams
    normalizer: Normalizer
    sigma_data: float
    config: TrainConfig
    final_loss: float = math.nan
    loss_history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def dim(self) -> int:
        return self.params.dim

    def _check_sigma(self, sigma: float) -> float:
        sigma = float(sigma)
        if not sigma > 0:
            raise ArgumentError(f"sigma must be positive, got {sigma}")
        return sigma

    def denoise(self, x: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        """EDM denoiser in normalized coordinates, batched over rows of x."""
        sigma = np.asarray(sigma, dtype=np.float64)
        f = nn.mlp_forward_batch(self.params, c_in(sigma, self.sigma_data)[:, None] * x, c_noise(sigma))
        return c_skip(sigma, self.sigma_data)[:, None] * x + c_out(sigma, self.sigma_data)[:, None] * f

    def score_batch(self, z: np.ndarray, sigma: float) -> np.ndarray:
        """Score field rows for a (B, dim) batch of raw latents."""
        sigma = self._check_sigma(sigma)
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.dim:
            raise ShapeError(f"expected (B, {self.dim}) latents, got {z.shape}")
        x = self.normalizer.normalize(z)
        sig = np.full(z.shape[0], sigma)
        return (self.denoise(x, sig) - x) / sigma**2

    def score(self, z: np.ndarray, sigma: float) -> np.ndarray:
        """Score field (D(x, sigma) - x) / sigma^2 at the normalized latent."""
        return self.score_batch(np.asarray(z, dtype=np.float64)[None, :], sigma)[0]

    def score_jvp_multi(self, z: np.ndarray, sigma: float, tangents: np.ndarray):
        """(scores, JVPs) for a (B, dim) batch and a (B, K, dim) tangent bundle.

        Tangents are taken in raw input coordinates and composed through the
        normalizer's diagonal scaling and the preconditioning.
        """
        sigma = self._check_sigma(sigma)
        z = np.asarray(z, dtype=np.float64)
        tangents = np.asarray(tangents, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.dim:
            raise ShapeError(f"expected (B, {self.dim}) latents, got {z.shape}")
        if tangents.ndim != 3 or tangents.shape[0] != z.shape[0] or tangents.shape[2] != self.dim:
            raise ShapeError(f"expected (B, K, {self.dim}) tangents, got {tangents.shape}")
        x = self.normalizer.normalize(z)
        dx = tangents / self.normalizer.std
        sig = np.full(z.shape[0], sigma)
        cin = c_in(sigma, self.sigma_data)
        f, df = nn.mlp_jvp_multi(self.params, cin * x, c_noise(sig), cin * dx)
        cs = c_skip(sigma, self.sigma_data)
        co = c_out(sigma, self.sigma_data)
        d_val = cs * x + co * f
        d_tan = cs * dx + co * df
        return (d_val - x) / sigma**2, (d_tan - dx) / sigma**2

    def score_jvp_batch(self, z: np.ndarray, sigma: float, tangents: np.ndarray) -> np.ndarray:
        """JVPs of the score field at one latent for a (K, dim) tangent stack."""
        tangents = np.asarray(tangents, dtype=np.float64)
        _, jvp = self.score_jvp_multi(
            np.asarray(z, dtype=np.float64)[None, :], sigma, tangents[None, :, :]
        )
        return jvp[0]

    def score_jvp(self, z: np.ndarray, sigma: float, v: np.ndarray) -> np.ndarray:
        """(d score / d z) . v at a single latent."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ShapeError(f"tangent shape {v.shape} != ({self.dim},)")
        return self.score_jvp_batch(z, sigma, v[None, :])[0]


def train_observer(train: LatentDataset, cfg: TrainConfig) -> DiffusionObserver:
    """Train the denoiser on ID latents with the sigma-weighted objective.

    Batches are sampled with replacement from a seeded stream, per-sample
    noise levels follow ln sigma ~ N(p_mean, p_std^2), and Adam runs under a
    cosine-decayed learning rate. Training is bitwise deterministic for a
    fixed config.
    """
    if train.count < cfg.batch:
        raise InsufficientDataError(
            f"need at least one batch of data: count={train.count} < batch={cfg.batch}"
        )
    normalizer = fit_normalizer(train)
    data = normalizer.normalize(train.rows64())
    n, dim = data.shape

    params = nn.init_params(dim, cfg.width, cfg.depth, cfg.emb_dim, seed=cfg.seed)
    opt = nn.Adam(params)
    rng = generator(cfg.seed, 0x7A)
    losses = np.zeros(cfg.steps)
    sd = cfg.sigma_data

    for step in range(cfg.steps):
        idx = rng.integers(0, n, size=cfg.batch)
        y = data[idx]
        sigma = np.exp(rng.normal(cfg.p_mean, cfg.p_std, size=cfg.batch))
        noised = y + rng.standard_normal((cfg.batch, dim)) * sigma[:, None]

        f, cache = nn.mlp_forward_batch(
            params, c_in(sigma, sd)[:, None] * noised, c_noise(sigma), want_cache=True
        )
        d_val = c_skip(sigma, sd)[:, None] * noised + c_out(sigma, sd)[:, None] * f
        resid = d_val - y
        w = loss_weight(sigma, sd)
        loss = float(np.mean(w[:, None] * np.square(resid)))
        if not math.isfinite(loss):
            raise TrainingError(f"loss became non-finite at step {step}")
        losses[step] = loss

        # dL/dF through D = c_skip x + c_out F, L = mean(w * resid^2)
        grad_d = (2.0 / resid.size) * w[:, None] * resid
        grad_f = c_out(sigma, sd)[:, None] * grad_d
        grads = nn.mlp_backward(params, cache, grad_f)
        opt.step(params, grads, nn.cosine_lr(cfg.lr, step, cfg.steps))

        if (
            cfg.checkpoint_path is not None
            and cfg.checkpoint_every > 0
            and (step + 1) % cfg.checkpoint_every == 0
        ):
            save_observer(
                DiffusionObserver(params, normalizer, sd, cfg, losses[step]), cfg.checkpoint_path
            )

    final = float(losses[-1]) if cfg.steps else math.nan
    return DiffusionObserver(
        params=params,
        normalizer=normalizer,
        sigma_data=sd,
        config=cfg,
        final_loss=final,
        loss_history=losses,
    )


# -- serialization ------------------------------------------------------------


def save_observer(obs: DiffusionObserver, path) -> None:
    """EDMO file: header, config echo, normalizer (f64), parameters (f32)."""
    p = obs.params
    with open(path, "wb") as fh:
        write_magic(fh, EDMO_MAGIC, EDMO_VERSION)
        write_u32(fh, p.dim, p.width, p.depth, p.emb_dim)
        write_f64(fh, obs.sigma_data, obs.final_loss)
        write_json_blob(fh, obs.config.to_dict())
        write_array(fh, obs.normalizer.mean, "float64")
        write_array(fh, obs.normalizer.std, "float64")
        for arr in p.arrays().values():
            write_array(fh, arr, "float32")


def load_observer(path) -> DiffusionObserver:
    spath = str(path)
    with open(path, "rb") as fh:
        read_magic(fh, EDMO_MAGIC, EDMO_VERSION, spath)
        dim, width, depth, emb_dim = read_u32(fh, 4, spath, "architecture header")
        sigma_data, final_loss = read_f64(fh, 2, spath, "scalars")
        cfg = TrainConfig.from_dict(read_json_blob(fh, spath, "config"))
        mean = read_array(fh, dim, "float64", spath, "normalizer mean")
        std = read_array(fh, dim, "float64", spath, "normalizer std")
        params = nn.init_params(dim, width, depth, emb_dim, seed=0)
        for name, arr in params.arrays().items():
            loaded = read_array(fh, arr.size, "float32", spath, name)
            arr[...] = loaded.reshape(arr.shape).astype(np.float64)
    return DiffusionObserver(
        params=params,
        normalizer=Normalizer(mean=mean, std=std),
        sigma_data=float(sigma_data),
        config=cfg,
        final_loss=float(final_loss),
    )


def untrained_observer(train: LatentDataset, cfg: TrainConfig | None = None) -> DiffusionObserver:
    """Observer with freshly initialized weights (score field = skip path)."""
    cfg = replace(cfg or TrainConfig(), steps=0)
    normalizer = fit_normalizer(train)
    params = nn.init_params(train.dim, cfg.width, cfg.depth, cfg.emb_dim, seed=cfg.seed)
    return DiffusionObserver(params=params, normalizer=normalizer, sigma_data=cfg.sigma_data, config=cfg)


def timed(fn, *args, **kwargs):
    """(result, elapsed seconds) helper used for latency reporting."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
