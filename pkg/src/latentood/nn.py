"""Residual-MLP kernel with hand-rolled reverse- and forward-mode derivatives.

The only architecture supported is the denoiser backbone: a linear input
projection plus a learned projection of a sinusoidal noise embedding, `depth`
residual blocks h <- h + silu(W h + b), and a linear output head. Keeping the
architecture fixed lets the gradient and JVP paths be written out explicitly
instead of through a general autodiff tape.

All math is float64. Gradients are exact (checked against central finite
differences in the test suite), and the JVP holds parameters and the noise
embedding fixed, differentiating with respect to the input only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ShapeError
from .rng import generator


def silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def silu_prime(x: np.ndarray) -> np.ndarray:
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def sinusoidal_embedding(c: np.ndarray, emb_dim: int) -> np.ndarray:
    """Sinusoidal features of a scalar conditioning value, one row per sample.

    Frequencies are log-spaced from 1 down to 1e-4, transformer-style; the
    first half of the vector carries cosines, the second half sines.
    """
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    half = emb_dim // 2
    freqs = np.exp(-math.log(10_000.0) * np.arange(half) / half)
    args = c[:, None] * freqs[None, :]
    return np.concatenate([np.cos(args), np.sin(args)], axis=1)


@dataclass
class MlpParams:
    """Weights of the residual denoiser MLP.

    hidden_w[l] / hidden_b[l] parameterize residual block l; w_out starts at
    zero so an untrained denoiser reduces to its skip path.
    """

    w_in: np.ndarray
    b_in: np.ndarray
    w_emb: np.ndarray
    b_emb: np.ndarray
    hidden_w: list[np.ndarray]
    hidden_b: list[np.ndarray]
    w_out: np.ndarray
    b_out: np.ndarray

    @property
    def dim(self) -> int:
        return self.w_in.shape[1]

    @property
    def width(self) -> int:
        return self.w_in.shape[0]

    @property
    def depth(self) -> int:
        return len(self.hidden_w)

    @property
    def emb_dim(self) -> int:
        return self.w_emb.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        """Named views of every parameter array, in a fixed order."""
        out = {"w_in": self.w_in, "b_in": self.b_in, "w_emb": self.w_emb, "b_emb": self.b_emb}
        for l, (w, b) in enumerate(zip(self.hidden_w, self.hidden_b)):
            out[f"hidden_w.{l}"] = w
            out[f"hidden_b.{l}"] = b
        out["w_out"] = self.w_out
        out["b_out"] = self.b_out
        return out

    def parameter_count(self) -> int:
        return sum(a.size for a in self.arrays().values())

    def copy(self) -> "MlpParams":
        return MlpParams(
            w_in=self.w_in.copy(),
            b_in=self.b_in.copy(),
            w_emb=self.w_emb.copy(),
            b_emb=self.b_emb.copy(),
            hidden_w=[w.copy() for w in self.hidden_w],
            hidden_b=[b.copy() for b in self.hidden_b],
            w_out=self.w_out.copy(),
            b_out=self.b_out.copy(),
        )


def init_params(dim: int, width: int = 1024, depth: int = 6, emb_dim: int = 256, seed: int = 0) -> MlpParams:
    """Gaussian init with per-layer scale 1/sqrt(fan_in); zero output head."""
    rng = generator(seed, 0xD1)
    def w(rows, cols):
        return rng.standard_normal((rows, cols)) / math.sqrt(cols)
    return MlpParams(
        w_in=w(width, dim),
        b_in=np.zeros(width),
        w_emb=w(width, emb_dim),
        b_emb=np.zeros(width),
        hidden_w=[w(width, width) for _ in range(depth)],
        hidden_b=[np.zeros(width) for _ in range(depth)],
        w_out=np.zeros((dim, width)),
        b_out=np.zeros(dim),
    )


@dataclass
class ForwardCache:
    z: np.ndarray
    emb: np.ndarray
    block_in: list[np.ndarray] = field(default_factory=list)
    block_pre: list[np.ndarray] = field(default_factory=list)
    h_final: np.ndarray = None  # type: ignore[assignment]


def _check_input(params: MlpParams, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.dim:
        raise ShapeError(f"input dim {z.shape[-1]} != model dim {params.dim}")
    return z


def mlp_forward_batch(params: MlpParams, z: np.ndarray, c_noise: np.ndarray, want_cache: bool = False):
    """Forward pass over a (B, dim) batch with per-sample conditioning."""
    z = _check_input(params, z)
    emb = sinusoidal_embedding(c_noise, params.emb_dim)
    if emb.shape[0] == 1 and z.shape[0] > 1:
        emb = np.broadcast_to(emb, (z.shape[0], emb.shape[1]))
    h = z @ params.w_in.T + params.b_in + emb @ params.w_emb.T + params.b_emb
    cache = ForwardCache(z=z, emb=emb) if want_cache else None
    for w, b in zip(params.hidden_w, params.hidden_b):
        a = h @ w.T + b
        if cache is not None:
            cache.block_in.append(h)
            cache.block_pre.append(a)
        h = h + silu(a)
    out = h @ params.w_out.T + params.b_out
    if cache is not None:
        cache.h_final = h
        return out, cache
    return out


def mlp_forward(params: MlpParams, z: np.ndarray, c_noise: float) -> np.ndarray:
    """Single-sample forward pass."""
    return mlp_forward_batch(params, np.asarray(z, dtype=np.float64)[None, :], np.asarray([c_noise]))[0]


def mlp_backward(params: MlpParams, cache: ForwardCache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(grad_out * output) with respect to every parameter.

    The extra "z" entry holds the gradient with respect to the input batch;
    the optimizer ignores it (it only looks up parameter names).
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != (cache.z.shape[0], params.dim):
        raise ShapeError(f"grad_out shape {g.shape} != {(cache.z.shape[0], params.dim)}")
    grads: dict[str, np.ndarray] = {
        "w_out": g.T @ cache.h_final,
        "b_out": g.sum(axis=0),
    }
    gh = g @ params.w_out
    for l in range(params.depth - 1, -1, -1):
        ga = gh * silu_prime(cache.block_pre[l])
        grads[f"hidden_w.{l}"] = ga.T @ cache.block_in[l]
        grads[f"hidden_b.{l}"] = ga.sum(axis=0)
        gh = gh + ga @ params.hidden_w[l]
    grads["w_in"] = gh.T @ cache.z
    grads["b_in"] = gh.sum(axis=0)
    grads["w_emb"] = gh.T @ cache.emb
    grads["b_emb"] = gh.sum(axis=0)
    grads["z"] = gh @ params.w_in
    return grads


def mlp_jvp_multi(params: MlpParams, z: np.ndarray, c_noise: np.ndarray, tangents: np.ndarray):
    """Forward values and input-space JVPs for a (B, K, dim) tangent bundle.

    The forward activations are computed once per sample and shared by all K
    tangent directions.
    """
    z = _check_input(params, z)
    tangents = np.asarray(tangents, dtype=np.float64)
    if tangents.shape[-1] != params.dim or tangents.shape[0] != z.shape[0]:
        raise ShapeError(f"tangent shape {tangents.shape} incompatible with input {z.shape}")
    emb = sinusoidal_embedding(c_noise, params.emb_dim)
    if emb.shape[0] == 1 and z.shape[0] > 1:
        emb = np.broadcast_to(emb, (z.shape[0], emb.shape[1]))
    h = z @ params.w_in.T + params.b_in + emb @ params.w_emb.T + params.b_emb
    dh = tangents @ params.w_in.T
    for w, b in zip(params.hidden_w, params.hidden_b):
        a = h @ w.T + b
        da = dh @ w.T
        dh = dh + silu_prime(a)[:, None, :] * da
        h = h + silu(a)
    return h @ params.w_out.T + params.b_out, dh @ params.w_out.T


def mlp_jvp(params: MlpParams, z: np.ndarray, c_noise: float, v: np.ndarray) -> np.ndarray:
    """(d output / d z) . v with parameters and conditioning held fixed."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.dim,):
        raise ShapeError(f"tangent shape {v.shape} != ({params.dim},)")
    _, jvp = mlp_jvp_multi(
        params, np.asarray(z, dtype=np.float64)[None, :], np.asarray([c_noise]), v[None, None, :]
    )
    return jvp[0, 0]


class Adam:
    """Plain Adam over the named parameter arrays."""

    def __init__(self, params: MlpParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}

    def step(self, params: MlpParams, grads: dict[str, np.ndarray], lr: float) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for name, arr in params.arrays().items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            arr -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Cosine decay from base_lr to 0 over total_steps."""
    if total_steps <= 0:
        return base_lr
    frac = min(max(step / total_steps, 0.0), 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))
