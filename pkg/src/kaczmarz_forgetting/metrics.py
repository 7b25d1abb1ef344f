"""Loss, forgetting and regret of continual regression iterates.

Every quantity is recomputed from the stored task matrices; nothing here
trusts the per-step caches of a trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learners import Trajectory
from .orderings import Policy
from .tasks import TaskCollection


@dataclass(frozen=True)
class MetricSeries:
    k_values: list[int]
    loss: list[float]
    forgetting: list[float]
    regret: list[float]
    dist_sq: list[float]


def _sq_residual(c: TaskCollection, m: int, w) -> float:
    t = c.tasks[m]
    r = t.x @ w - t.y
    return float(r @ r)


def _check_w(c: TaskCollection, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (c.dim,):
        raise ValueError(f"dimension mismatch: w has shape {w.shape}, collection has d={c.dim}")
    return w


def _check_k(traj: Trajectory, k: int, lo: int = 1) -> None:
    if not lo <= k <= traj.k:
        raise IndexError(f"k={k} outside [{lo}, {traj.k}]")


def training_loss(c: TaskCollection, w) -> float:
    w = _check_w(c, w)
    return sum(_sq_residual(c, m, w) for m in range(c.T)) / (2 * c.T)


def forgetting(c: TaskCollection, traj: Trajectory, k: int) -> float:
    _check_k(traj, k)
    wk = traj.iterates[k]
    return sum(_sq_residual(c, traj.ordering[t], wk) for t in range(k)) / (2 * k)


def regret(c: TaskCollection, traj: Trajectory, k: int) -> float:
    _check_k(traj, k)
    return sum(_sq_residual(c, traj.ordering[t], traj.iterates[t]) for t in range(k)) / (2 * k)


def dist_sq(c: TaskCollection, w) -> float:
    w = _check_w(c, w)
    return float(np.sum((w - c.w_star) ** 2))


def bridge_forgetting_bound(c: TaskCollection, traj: Trajectory, k: int) -> tuple[float, float]:
    """Per-run ``(F(k), ||X_tau(k) w_{k-1} - y_tau(k)||^2 + ||w*||^2 R^2 / k)``.

    The inequality between the two holds in expectation over orderings only.
    """
    _check_k(traj, k)
    s = c.stats
    lhs = forgetting(c, traj, k)
    rhs = _sq_residual(c, traj.ordering[k - 1], traj.iterates[k - 1]) + s.w_star_norm**2 * s.radius_R**2 / k
    return lhs, rhs


def wor_loss_decomposition(c: TaskCollection, traj: Trajectory, k: int) -> tuple[float, float, float]:
    """``(L(w_k), (k/T) F(k), (T-k)/(2T) ||X_tau(k+1) w_k - y_tau(k+1)||^2)``.

    In expectation over permutations the first equals the sum of the others.
    Needs the ordering to extend to ``k+1`` unless ``k == T``.
    """
    if traj.ordering.policy is not Policy.WITHOUT_REPLACEMENT:
        raise ValueError("wor_loss_decomposition needs a without-replacement ordering")
    _check_k(traj, k)
    T = c.T
    wk = traj.iterates[k]
    loss = training_loss(c, wk)
    forget_term = k / T * forgetting(c, traj, k)
    if k == T:
        return loss, forget_term, 0.0
    if traj.ordering.k < k + 1:
        raise IndexError(f"ordering of length {traj.ordering.k} does not reveal tau({k + 1})")
    unseen = (T - k) / (2 * T) * _sq_residual(c, traj.ordering[k], wk)
    return loss, forget_term, unseen


def series(c: TaskCollection, traj: Trajectory, k_values) -> MetricSeries:
    ks = [int(k) for k in k_values]
    return MetricSeries(
        k_values=ks,
        loss=[training_loss(c, traj.iterates[k]) for k in ks],
        forgetting=[forgetting(c, traj, k) for k in ks],
        regret=[regret(c, traj, k) for k in ks],
        dist_sq=[dist_sq(c, traj.iterates[k]) for k in ks],
    )
