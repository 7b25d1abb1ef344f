"""Dense linear algebra primitives built on a single SVD.

Matrices and vectors are plain ``numpy`` float arrays.  Every routine treats
singular values at or below ``rank_tol = 1e-12 * sigma_max * max(rows, cols)``
as exact zeros.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_RTOL = 1e-12


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced invalid output."""


class NotRealizableError(ValueError):
    """The linear system has no exact solution within tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.message, self.residual = message, residual

    def __reduce__(self):
        return type(self), (self.message, self.residual)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=float, copy=True).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SvdFactors:
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray
    rank_tol: float
    numerical_rank: int

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.vt


def rank_tolerance(sigma: np.ndarray, shape: tuple[int, int]) -> float:
    smax = float(sigma[0]) if sigma.size else 0.0
    # subnormal singular values have no representable reciprocal
    return max(RANK_RTOL * smax * max(shape), float(np.finfo(float).tiny))


def svd(a) -> SvdFactors:
    """Thin SVD with the numerical rank attached."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or not np.all(np.isfinite(a)):
        raise ValueError(f"svd expects a finite 2-D array, got shape {a.shape}")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for a {a.shape[0]}x{a.shape[1]} matrix") from exc
    tol = rank_tolerance(s, a.shape)
    rank = int(np.count_nonzero(s > tol))
    return SvdFactors(u=u, sigma=s, vt=vt, rank_tol=tol, numerical_rank=rank)


def numerical_rank(a) -> int:
    return svd(a).numerical_rank


def pinv(a) -> np.ndarray:
    f = svd(a)
    r = f.numerical_rank
    # A+ = V_r diag(1/sigma_r) U_r^T
    return (f.vt[:r].T / f.sigma[:r]) @ f.u[:, :r].T


def row_space_projection(a) -> np.ndarray:
    """Orthogonal projector ``A+ A`` onto the row space of ``a``."""
    f = svd(a)
    v = f.vt[: f.numerical_rank]
    return v.T @ v


def complement_projection(a) -> np.ndarray:
    """Orthogonal projector ``I - A+ A`` onto the null space of ``a``."""
    a = np.asarray(a, dtype=float)
    return np.eye(a.shape[1]) - row_space_projection(a)


def min_norm_solve(a, b, atol: float = 1e-8) -> np.ndarray:
    """Return ``A+ b`` after checking that ``A w = b`` is consistent."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: A is {a.shape}, b has length {b.shape[0]}")
    w = pinv(a) @ b
    residual = float(np.linalg.norm(a @ w - b))
    if residual > atol * (1.0 + float(np.linalg.norm(b))):
        raise NotRealizableError("not jointly realizable", residual)
    return w


def spectral_norm(a) -> float:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(svd(a).sigma[0])
