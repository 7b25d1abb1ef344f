"""Fixed-step SGD on realizable stochastic least squares.

Components are ``f(w; i) = 0.5 ||A_i w - b_i||^2`` sampled uniformly.  The
smoothness constant ``beta`` is ``max_i ||A_i||^2`` and step sizes must
satisfy ``eta < 2 / beta``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import linalg, orderings
from .linalg import NotRealizableError


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class LsqProblem:
    components: tuple[tuple[np.ndarray, np.ndarray], ...]
    w_star: np.ndarray
    beta: float
    distribution: str = "uniform"

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.w_star.shape[0]

    @cached_property
    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        rmax = max(a.shape[0] for a, _ in self.components)
        A = np.zeros((self.n, rmax, self.dim))
        b = np.zeros((self.n, rmax))
        for i, (a, bi) in enumerate(self.components):
            A[i, : a.shape[0]] = a
            b[i, : a.shape[0]] = bi
        return A, b

    def loss(self, w, i: int) -> float:
        a, b = self.components[i]
        r = a @ w - b
        return 0.5 * float(r @ r)

    def gradient(self, w, i: int) -> np.ndarray:
        a, b = self.components[i]
        return a.T @ (a @ w - b)

    def mean_loss(self, w) -> float:
        return sum(self.loss(w, i) for i in range(self.n)) / self.n


def make_problem(components, w_star=None) -> LsqProblem:
    comps = []
    for a, b in components:
        a = linalg.as_matrix(a, "A_i")
        b = linalg.as_vector(b, "b_i")
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"A_i has {a.shape[0]} rows but b_i has length {b.shape[0]}")
        comps.append((a, b))
    if not comps:
        raise ValueError("need at least one component")
    d = comps[0][0].shape[1]
    if any(a.shape[1] != d for a, _ in comps):
        raise ValueError("components disagree on dimension")
    if w_star is None:
        w_star = linalg.min_norm_solve(np.vstack([a for a, _ in comps]), np.concatenate([b for _, b in comps]))
    w_star = linalg.as_vector(w_star, "w_star")
    for a, b in comps:
        res = float(np.linalg.norm(a @ w_star - b))
        if res > 1e-8 * (1 + float(np.linalg.norm(b))):
            raise NotRealizableError("w_star does not solve every component", res)
    beta = max(linalg.spectral_norm(a) for a, _ in comps) ** 2
    return LsqProblem(tuple(comps), w_star, beta)


def gen_random_problem(seed: int, n: int, d: int, rows=(1, 3), normalize: bool = True) -> LsqProblem:
    """Gaussian components; with ``normalize`` the result has ``beta = 1`` and ``||w*|| = 1``."""
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(d)
    comps = []
    for _ in range(n):
        a = rng.standard_normal((int(rng.integers(rows[0], rows[1] + 1)), d))
        comps.append(a)
    if normalize:
        w_star /= np.linalg.norm(w_star)
        s = max(linalg.spectral_norm(a) for a in comps)
        comps = [a / s for a in comps]
    return make_problem([(a, a @ w_star) for a in comps], w_star)


def gen_rank1_unit_problem(seed: int, n: int, d: int) -> LsqProblem:
    """Rank-1 components with unit rows and ``||w*|| = 1`` (so ``beta = 1``)."""
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(d)
    w_star /= np.linalg.norm(w_star)
    rows = rng.standard_normal((n, d))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return make_problem([(r[None, :], [r @ w_star]) for r in rows], w_star)


@dataclass(frozen=True)
class SgdRun:
    iterates: np.ndarray  # (steps+1, d)
    sample_sequence: tuple[int, ...]  # i_0 .. i_steps (wor: may stop at n-1)
    eta: float
    D: float
    per_step_loss: np.ndarray  # f(w_t; i_t) for every t with a sample
    regret_partial_sums: np.ndarray
    policy: str = "with_replacement"

    @property
    def steps(self) -> int:
        return self.iterates.shape[0] - 1


def _check_eta(problem: LsqProblem, eta: float) -> None:
    if not eta > 0:
        raise StepSizeError("step size must be positive")
    if eta * problem.beta >= 2:
        raise StepSizeError(
            f"step size outside guaranteed range: eta={eta} >= 2/beta={2 / problem.beta}"
        )


def _run(problem: LsqProblem, w0, eta: float, steps: int, seq, policy: str) -> SgdRun:
    _check_eta(problem, eta)
    if steps < 1:
        raise ValueError("steps >= 1 required")
    w = np.array(w0, dtype=float) if w0 is not None else np.zeros(problem.dim)
    if w.shape != (problem.dim,):
        raise ValueError(f"w0 has shape {w.shape}, problem has d={problem.dim}")
    iterates = np.empty((steps + 1, problem.dim))
    iterates[0] = w
    for t in range(steps):
        w = w - eta * problem.gradient(w, seq[t])
        iterates[t + 1] = w
    losses = np.array([problem.loss(iterates[t], i) for t, i in enumerate(seq)])
    iterates.setflags(write=False)
    D = float(np.linalg.norm(iterates[0] - problem.w_star))
    return SgdRun(iterates, tuple(int(i) for i in seq), eta, D, losses, np.cumsum(losses), policy)


def sgd_with_replacement(problem: LsqProblem, w0, eta: float, steps: int, seed: int) -> SgdRun:
    seq = orderings.sample_with_replacement(seed, problem.n, steps + 1).indices
    return _run(problem, w0, eta, steps, seq, "with_replacement")


def sgd_without_replacement(problem: LsqProblem, w0, eta: float, steps: int, seed: int) -> SgdRun:
    if steps > problem.n:
        raise orderings.OrderingExhausted(
            f"without-replacement ordering exhausted: steps={steps} > n={problem.n}"
        )
    seq = orderings.sample_without_replacement(seed, problem.n, min(steps + 1, problem.n)).indices
    return _run(problem, w0, eta, steps, seq, "without_replacement")


def run_with_sequence(problem: LsqProblem, w0, eta: float, seq) -> SgdRun:
    """Run on an explicit index sequence ``i_0..i_T`` (``T = len(seq) - 1`` steps)."""
    return _run(problem, w0, eta, len(seq) - 1, list(seq), "explicit")


def regret_bound(D: float, eta: float, beta: float) -> float:
    return D**2 / (2 * eta * (2 - eta * beta))


def regret_sum(run: SgdRun, beta: float) -> tuple[float, float, bool]:
    """``(sum_t f(w_t; i_t), D^2 / (2 eta (2 - eta beta)), regret <= bound)``."""
    total = float(run.regret_partial_sums[-1]) if len(run.regret_partial_sums) else 0.0
    bound = regret_bound(run.D, run.eta, beta)
    return total, bound, total <= bound * (1 + 1e-12) + 1e-15


def prefix_average_loss(run: SgdRun, problem: LsqProblem, upto: int, at: int | None = None) -> float:
    """``(1/(upto+1)) sum_{t<=upto} f(w_at; i_t)``; ``at`` defaults to the last iterate."""
    at = run.steps if at is None else at
    if not 0 <= upto < len(run.sample_sequence):
        raise IndexError(f"upto={upto} outside the sampled sequence of length {len(run.sample_sequence)}")
    if not 0 <= at <= run.steps:
        raise IndexError(f"iterate index {at} outside [0, {run.steps}]")
    w = run.iterates[at]
    return sum(problem.loss(w, i) for i in run.sample_sequence[: upto + 1]) / (upto + 1)


def run_batch(problem: LsqProblem, w0, eta: float, seqs: np.ndarray, steps: int) -> np.ndarray:
    """Final iterates ``w_steps`` for every row of ``seqs`` (shape ``S x >=steps``).

    Row ``r`` equals ``_run(..., seqs[r]).iterates[steps]`` up to rounding.
    """
    _check_eta(problem, eta)
    A, b = problem.padded
    S = seqs.shape[0]
    W = np.tile(np.asarray(w0 if w0 is not None else np.zeros(problem.dim), dtype=float), (S, 1))
    for t in range(steps):
        idx = seqs[:, t]
        Ai = A[idx]
        r = np.einsum("sij,sj->si", Ai, W) - b[idx]
        W = W - eta * np.einsum("sij,si->sj", Ai, r)
    return W


def batch_component_losses(problem: LsqProblem, W: np.ndarray) -> np.ndarray:
    """``f(W[s]; i)`` for every seed row and component, shape ``S x n``."""
    A, b = problem.padded
    r = np.einsum("nij,sj->sni", A, W) - b[None]
    return 0.5 * np.sum(r * r, axis=2)


def export_csv(run: SgdRun, problem: LsqProblem, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "i_t", "loss", "dist_sq"])
        for t in range(run.steps + 1):
            dist = float(np.sum((run.iterates[t] - problem.w_star) ** 2))
            if t < len(run.sample_sequence):
                wr.writerow([t, run.sample_sequence[t], repr(float(run.per_step_loss[t])), repr(dist)])
            else:
                wr.writerow([t, "", "", repr(dist)])

