"""Batched Monte-Carlo simulation of Kaczmarz runs over many orderings.

One matrix product per task and step advances every seed at once.  Row ``r``
of every output corresponds to ``orderings.make(policy, T, k, seeds[r])`` and
agrees with ``learners.run`` followed by ``metrics`` up to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg, orderings
from .orderings import Policy
from .tasks import TaskCollection

# pathwise slack
CONTRACTION_SLACK = 1e-12
TELESCOPE_RTOL = 1e-8
CURRENT_RESIDUAL_RTOL = 1e-8
DOMINATION_SLACK = 1e-12


def contraction_slack(c: TaskCollection) -> float:
    """Relative rounding level of one projection step.

    A projection computed from an SVD is accurate to about ``eps * kappa``
    relative to ``||w|| + ||w*||``, where ``kappa`` is the worst condition
    number (on the row space) among the tasks.
    """
    kappa = 1.0
    for t in c.tasks:
        f = linalg.svd(t.x)
        if f.numerical_rank:
            kappa = max(kappa, float(f.sigma[0] / f.sigma[f.numerical_rank - 1]))
    return max(CONTRACTION_SLACK, 64 * np.finfo(float).eps * kappa)


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


@dataclass
class PathwiseReport:
    """Worst-case margins of the pathwise invariants; a value > 0 is a violation."""

    contraction: float = -np.inf
    telescoping: float = -np.inf
    current_residual: float = -np.inf
    domination: float = -np.inf
    steps_checked: int = 0

    def merge(self, other: "PathwiseReport") -> "PathwiseReport":
        return PathwiseReport(
            max(self.contraction, other.contraction),
            max(self.telescoping, other.telescoping),
            max(self.current_residual, other.current_residual),
            max(self.domination, other.domination),
            self.steps_checked + other.steps_checked,
        )

    @property
    def violations(self) -> dict[str, bool]:
        return {
            "contraction": self.contraction > 0,
            "telescoping": self.telescoping > 0,
            "current_residual": self.current_residual > 0,
            "domination": self.domination > 0,
        }

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())


@dataclass
class RegressionSample:
    """Per-seed metrics at each grid point; arrays have shape ``(S, len(k_grid))``."""

    k_grid: list[int]
    seeds: list[int]
    loss: np.ndarray
    forgetting: np.ndarray
    regret: np.ndarray
    dist_sq: np.ndarray
    loss_prev: np.ndarray  # L(w_{k-1})
    current_before: np.ndarray  # ||X_tau(k) w_{k-1} - y_tau(k)||^2
    unseen: np.ndarray  # ||X_tau(k+1) w_k - y_tau(k+1)||^2, nan when tau(k+1) does not exist
    pathwise: PathwiseReport = field(default_factory=PathwiseReport)


def simulate_regression(
    c: TaskCollection,
    policy,
    seeds,
    k_grid,
    pathwise: bool = True,
    w0=None,
    indices: np.ndarray | None = None,
) -> RegressionSample:
    policy = orderings.parse_policy(policy)
    seeds = list(seeds)
    k_grid = sorted(int(k) for k in k_grid)
    if not k_grid or k_grid[0] < 1:
        raise ValueError("k_grid must be nonempty with k >= 1")
    kmax = k_grid[-1]
    T, d = c.T, c.dim
    if indices is None:
        horizon = kmax + 1
        if policy is Policy.WITHOUT_REPLACEMENT:
            if kmax > T:
                raise orderings.OrderingExhausted(f"without-replacement ordering exhausted: k={kmax} > T={T}")
            horizon = min(kmax + 1, T)
        indices = orderings.sample_batch(policy, seeds, T, horizon)
    S = indices.shape[0]
    pad = c.padded
    Pn, off = pad["null_proj"], pad["offset"]
    Xs = pad["x"].reshape(T * pad["x"].shape[1], d)  # all rows stacked, zero padded
    Ys = pad["y"].reshape(-1)
    nrow = pad["x"].shape[1]
    ynorm = pad["y_norm"]
    R2 = c.stats.radius_R**2
    slack = contraction_slack(c)
    wsn = float(np.linalg.norm(c.w_star))
    rowproj = pad["row_proj"]

    def all_sq_res(W):
        r = W @ Xs.T - Ys
        return (r * r).reshape(S, T, nrow).sum(axis=2)  # (S, T)

    W = np.zeros((S, d)) if w0 is None else np.tile(np.asarray(w0, dtype=float), (S, 1))
    z0sq = np.sum((W - c.w_star) ** 2, axis=1)
    tele = np.zeros(S)
    counts = np.zeros((S, T))
    regret_acc = np.zeros(S)
    G = len(k_grid)
    out = {name: np.full((S, G), np.nan) for name in ("loss", "forg", "reg", "dist", "lprev", "cur", "unseen")}
    report = PathwiseReport()
    rows = np.arange(S)
    gi = 0
    res_prev = all_sq_res(W) if k_grid[0] == 1 else None
    for t in range(1, kmax + 1):
        tau = indices[:, t - 1]
        next_is_grid = gi < G and k_grid[gi] == t
        if next_is_grid and res_prev is None:
            res_prev = all_sq_res(W)
        # ||X_tau w_{t-1} - y_tau||^2 via per-task residual rows
        r_before = (W @ Xs.T - Ys).reshape(S, T, nrow)[rows, tau]
        cur_before = np.sum(r_before * r_before, axis=1)
        regret_acc += cur_before
        counts[rows, tau] += 1
        Z_prev = W - c.w_star
        W_new = np.empty_like(W)
        for m in range(T):
            mask = tau == m
            if mask.any():
                W_new[mask] = W[mask] @ Pn[m].T + off[m]
        Z = W_new - c.w_star
        if pathwise:
            n_prev = np.linalg.norm(Z_prev, axis=1)
            n_new = np.linalg.norm(Z, axis=1)
            report.contraction = max(report.contraction, float(np.max(n_new - n_prev - slack * (1 + n_prev + wsn))))
            tele += np.sum((Z_prev - Z) ** 2, axis=1)
            r_after = (W_new @ Xs.T - Ys).reshape(S, T, nrow)[rows, tau]
            cur_after = np.sqrt(np.sum(r_after * r_after, axis=1))
            report.current_residual = max(
                report.current_residual, float(np.max(cur_after - CURRENT_RESIDUAL_RTOL * (1 + ynorm[tau])))
            )
            # L_m(w) <= R^2 f_m(w) for every task m at the new iterate
            Lm = 0.5 * all_sq_res(W_new)
            proj = np.einsum("mij,sj->smi", rowproj, Z)
            fm = 0.5 * np.sum(proj * proj, axis=2)
            report.domination = max(report.domination, float(np.max(Lm - R2 * fm - DOMINATION_SLACK * (1 + R2 * z0sq[:, None]))))
            report.steps_checked += S
        W = W_new
        if next_is_grid:
            res_k = all_sq_res(W)
            out["loss"][:, gi] = res_k.mean(axis=1) / 2
            out["forg"][:, gi] = np.sum(counts * res_k, axis=1) / (2 * t)
            out["reg"][:, gi] = regret_acc / (2 * t)
            out["dist"][:, gi] = np.sum((W - c.w_star) ** 2, axis=1)
            out["lprev"][:, gi] = res_prev.mean(axis=1) / 2
            out["cur"][:, gi] = cur_before
            if indices.shape[1] > t:
                out["unseen"][:, gi] = res_k[rows, indices[:, t]]
            if pathwise:
                gap = np.abs(tele - (z0sq - out["dist"][:, gi]))
                report.telescoping = max(report.telescoping, float(np.max(gap - TELESCOPE_RTOL * (1 + z0sq))))
            gi += 1
            res_prev = res_k if gi < G and k_grid[gi] == t + 1 else None
    return RegressionSample(
        k_grid, seeds, out["loss"], out["forg"], out["reg"], out["dist"], out["lprev"], out["cur"], out["unseen"], report
    )
