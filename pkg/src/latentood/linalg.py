"""Dense symmetric factorization used by the covariance detectors.

Quadratic forms x' (A + ridge I)^-1 x are always evaluated through triangular
solves against the Cholesky factor; the inverse is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefiniteError, ShapeError


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular L with L L' = A + ridge I."""

    lower: np.ndarray
    ridge: float

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve (L L') x = b."""
        y = solve_triangular(self.lower, b, lower=True)
        return solve_triangular(self.lower, y, lower=True, trans="T")

    def quad_form(self, x: np.ndarray) -> np.ndarray:
        """x' (L L')^-1 x for a vector or for each row of a matrix."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if x.shape[-1] != self.dim:
            raise ShapeError(f"vector dim {x.shape[-1]} != factor dim {self.dim}")
        u = solve_triangular(self.lower, x.reshape(-1, self.dim).T, lower=True)
        q = np.einsum("ij,ij->j", u, u)
        return float(q[0]) if single else q


def cholesky(a: np.ndarray, ridge: float = 0.0) -> CholeskyFactor:
    """Factor A + ridge I, raising NotPositiveDefiniteError on failure."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    if ridge < 0:
        raise ShapeError("ridge must be non-negative")
    shifted = a + ridge * np.eye(a.shape[0])
    try:
        lower = np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"non-positive pivot while factoring (ridge={ridge:g}); raise the ridge"
        ) from exc
    return CholeskyFactor(lower=lower, ridge=float(ridge))
