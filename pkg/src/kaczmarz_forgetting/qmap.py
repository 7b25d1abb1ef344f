"""The second-moment map ``Q[A] = (1/T) sum_m P_m A P_m`` and checks on it.

``P_m = I - X_m+ X_m``.  Under with-replacement orderings the error
``z_t = w_t - w*`` satisfies ``E[z_t z_t^T] = Q^t[z_0 z_0^T]``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import linalg
from .linalg import NumericalError
from .tasks import TaskCollection

POWER_SEED = 20250101
POWER_TOL = 1e-9
POWER_MAX_ITERS = 10_000


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: float
    passed: bool

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "bound", float(self.bound))
        object.__setattr__(self, "passed", bool(self.passed))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class QOperator:
    projections: np.ndarray  # (T, d, d)

    @property
    def T(self) -> int:
        return self.projections.shape[0]

    @property
    def dim(self) -> int:
        return self.projections.shape[1]

    def __call__(self, a) -> np.ndarray:
        return apply_q(self, a)


def build_q(c: TaskCollection) -> QOperator:
    P = np.stack([linalg.complement_projection(t.x) for t in c.tasks])
    for m, p in enumerate(P):
        if np.linalg.norm(p @ p - p) > 1e-8 or np.linalg.norm(p - p.T) > 1e-8:
            raise NumericalError(f"projection {m} is not symmetric idempotent")
    P.setflags(write=False)
    return QOperator(P)


def apply_q(q: QOperator, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (q.dim, q.dim):
        raise ValueError(f"expected a {q.dim}x{q.dim} matrix, got {a.shape}")
    return np.mean(q.projections @ a @ q.projections, axis=0)


def apply_q_power(q: QOperator, a, n: int) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    for _ in range(n):
        out = apply_q(q, out)
    return out


def _poly_apply(q: QOperator, a: np.ndarray, n: int, residual: bool) -> np.ndarray:
    qn = apply_q_power(q, a, n)
    return qn - apply_q(q, qn) if residual else qn


def q_operator_norm(q: QOperator, n: int, with_residual_factor: bool = True) -> float:
    """Operator norm (Frobenius geometry) of ``Q^n`` or ``Q^n (I - Q)``.

    Both maps are self-adjoint and positive semidefinite, so the norm is the
    top eigenvalue.  Plain power iteration stalls when the leading eigenvalues
    nearly coincide, so this runs Lanczos (power iteration on a Krylov basis)
    with full reorthogonalization, stopping once the Ritz residual bounds the
    relative eigenvalue error by ``POWER_TOL``.
    """
    if n < 0:
        raise ValueError("n >= 0 required")
    d = q.dim
    dim = d * d
    v = np.random.default_rng(POWER_SEED).standard_normal(dim)
    v /= np.linalg.norm(v)
    basis = [v]
    alphas: list[float] = []
    betas: list[float] = []
    top = 0.0
    for j in range(min(dim, POWER_MAX_ITERS)):
        w = _poly_apply(q, basis[j].reshape(d, d), n, with_residual_factor).reshape(-1)
        scale = float(np.linalg.norm(w))
        alphas.append(float(w @ basis[j]))
        V = np.array(basis)
        w = w - V.T @ (V @ w)
        w = w - V.T @ (V @ w)  # second pass keeps the basis orthonormal
        b = float(np.linalg.norm(w))
        theta, s = np.linalg.eigh(np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1))
        top = float(theta[-1])
        if b * abs(s[-1, -1]) <= POWER_TOL * abs(top) or b <= 1e-13 * scale:
            return max(top, 0.0)
        betas.append(b)
        basis.append(w / b)
    if len(basis) > dim:
        return max(top, 0.0)  # Krylov space exhausted: Ritz values are exact
    raise NumericalError(f"Lanczos did not converge in {POWER_MAX_ITERS} steps")


def dense_matrix(q: QOperator) -> np.ndarray:
    """``d^2 x d^2`` matrix of ``Q`` acting on row-major ``vec(A)``."""
    return np.mean([np.kron(p, p) for p in q.projections], axis=0)


def dense_spectrum(q: QOperator) -> np.ndarray:
    return np.linalg.eigvalsh(dense_matrix(q))


def dense_operator_norm(q: QOperator, n: int, with_residual_factor: bool = True) -> float:
    lam = dense_spectrum(q)
    vals = lam**n * (1 - lam) if with_residual_factor else lam**n
    return float(np.max(np.abs(vals)))


def dimensionality_bound(c: TaskCollection) -> float:
    s = c.stats
    return min(np.sqrt(c.T * s.avg_rank), np.sqrt(max(c.dim - s.avg_rank, 0.0)))


def q_row_projection_frobenius(q: QOperator, c: TaskCollection) -> float:
    """``||Q[X+ X]||_F`` for the stacked data matrix."""
    return float(np.linalg.norm(apply_q(q, linalg.row_space_projection(c.stacked_x))))


def check_domination(c: TaskCollection, q: QOperator | None = None) -> float:
    """Smallest eigenvalue of ``X+X - Q[X+X] - X^T X / (R^2 T)``; should be >= 0."""
    q = q or build_q(c)
    x = c.stacked_x
    rp = linalg.row_space_projection(x)
    R = c.stats.radius_R
    if R == 0:
        return 0.0
    m = rp - apply_q(q, rp) - x.T @ x / (R**2 * c.T)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def second_moment_recursion_check(c: TaskCollection, k: int, seeds, w0=None) -> CheckResult:
    """Compare Monte-Carlo ``E[z_t z_t^T]`` against ``Q^t[z_0 z_0^T]`` for ``t <= k``.

    Uses with-replacement orderings.  Passes when the largest Frobenius gap is
    within five Frobenius-aggregated standard errors (plus ``1e-12``).
    """
    from . import orderings

    q = build_q(c)
    w0 = np.zeros(c.dim) if w0 is None else np.asarray(w0, dtype=float)
    z0 = w0 - c.w_star
    idx = orderings.sample_batch("wr", seeds, c.T, k)
    S = idx.shape[0]
    Z = np.tile(z0, (S, 1))
    target = np.outer(z0, z0)
    worst_gap, worst_env = 0.0, 0.0
    ratio = 0.0
    for t in range(1, k + 1):
        Z = np.einsum("sij,sj->si", q.projections[idx[:, t - 1]], Z)
        target = apply_q(q, target)
        outer = np.einsum("si,sj->sij", Z, Z)
        mean = outer.mean(axis=0)
        se = outer.std(axis=0, ddof=1) / np.sqrt(S) if S > 1 else np.zeros_like(mean)
        gap = float(np.linalg.norm(mean - target))
        env = 5 * float(np.linalg.norm(se)) + 1e-12
        if gap / env > ratio:
            ratio, worst_gap, worst_env = gap / env, gap, env
    return CheckResult("second_moment_recursion", worst_gap, worst_env, ratio <= 1.0)


def trace_sequence(c: TaskCollection, indices) -> np.ndarray:
    """``a_t = tr(P_t ... P_2 (I - P_1) P_2 ... P_t)`` along one ordering, t = 1..k."""
    P = [t.null_projection for t in c.tasks]
    idx = list(indices)
    m = np.eye(c.dim) - P[idx[0]]
    out = [float(np.trace(m))]
    for i in idx[1:]:
        m = P[i] @ m @ P[i]
        out.append(float(np.trace(m)))
    return np.array(out)


def self_adjoint_gap(q: QOperator, a, b) -> float:
    """Relative gap ``|<Q[A],B> - <A,Q[B]>|``."""
    lhs = float(np.sum(apply_q(q, a) * b))
    rhs = float(np.sum(a * apply_q(q, b)))
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def rayleigh_quotient(q: QOperator, a) -> float:
    return float(np.sum(apply_q(q, a) * a) / np.sum(a * a))


def trace_commutation_gap(q: QOperator, a, b, n: int) -> float:
    """Relative gap ``|tr(A Q^n[B]) - tr(Q^n[A] B)|``."""
    lhs = float(np.trace(a @ apply_q_power(q, b, n)))
    rhs = float(np.trace(apply_q_power(q, a, n) @ b))
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def run_checks(c: TaskCollection, n_values=(1, 3, 10, 30), spectrum_samples: int = 20, seed: int = 0):
    """All deterministic Q checks on one collection, as a list of ``CheckResult``."""
    q = build_q(c)
    rng = np.random.default_rng(seed)
    results = []
    lam = dense_spectrum(q) if c.dim <= 12 else None
    if lam is not None:
        results.append(CheckResult("spectrum_min", float(lam[0]), -1e-9, bool(lam[0] >= -1e-9)))
        results.append(CheckResult("spectrum_max", float(lam[-1]), 1 + 1e-9, bool(lam[-1] <= 1 + 1e-9)))
    rqs = [rayleigh_quotient(q, rng.standard_normal((c.dim, c.dim))) for _ in range(spectrum_samples)]
    results.append(CheckResult("rayleigh_min", min(rqs), -1e-9, min(rqs) >= -1e-9))
    results.append(CheckResult("rayleigh_max", max(rqs), 1 + 1e-9, max(rqs) <= 1 + 1e-9))
    for n in n_values:
        bound = 1 / (np.e * n) + 1e-6
        v = q_operator_norm(q, n, True)
        results.append(CheckResult(f"residual_poly_norm_n{n}", v, bound, v <= bound))
        if lam is not None:
            v = dense_operator_norm(q, n, True)
            results.append(CheckResult(f"residual_poly_norm_dense_n{n}", v, bound, v <= bound))
    v = q_row_projection_frobenius(q, c)
    bound = dimensionality_bound(c) + 1e-6
    results.append(CheckResult("row_projection_frobenius", v, bound, v <= bound))
    v = check_domination(c, q)
    results.append(CheckResult("domination_min_eig", v, -1e-8, v >= -1e-8))
    return results
