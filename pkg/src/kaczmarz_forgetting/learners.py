"""Continual regression learners: inner GD to convergence, block Kaczmarz,
and unit-step SGD on the projected objective.

All three produce the same iterates on realizable collections; each is
implemented along its own route so that they can check one another.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .linalg import NumericalError
from .orderings import Ordering
from .tasks import Task, TaskCollection


class Learner(str, Enum):
    GD_INNER = "gd_inner"
    KACZMARZ = "kaczmarz"
    MODIFIED_SGD = "modified_sgd"


class InnerSolveError(NumericalError):
    def __init__(self, residual: float, iters: int):
        super().__init__(f"inner GD did not converge in {iters} iterations (residual={residual:.3e})")
        self.residual = residual
        self.iters = iters

    def __reduce__(self):
        return type(self), (self.residual, self.iters)


class StepError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.step, self.cause)


@dataclass(frozen=True)
class InnerSolveConfig:
    step_rule: str = "inverse_sq_spectral_norm"
    residual_tol: float = 1e-10
    max_inner_iters: int = 1_000_000

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")
        if self.step_rule != "inverse_sq_spectral_norm":
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class Trajectory:
    iterates: np.ndarray  # (k+1, d)
    ordering: Ordering
    learner_tag: str
    per_step_current_residual: np.ndarray  # (k,), entry t-1 is after step t
    inner_iters: tuple[int, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.iterates.shape[0] - 1

    def __getitem__(self, t) -> np.ndarray:
        return self.iterates[t]


def _check_dims(w: np.ndarray, task: Task) -> None:
    if w.shape != (task.cols,):
        raise ValueError(f"dimension mismatch: w has shape {w.shape}, task has {task.cols} columns")


def kaczmarz_step(w, task: Task) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    _check_dims(w, task)
    return w - task.pinv @ (task.x @ w - task.y)


def gd_inner_step_to_convergence(
    w, task: Task, cfg: InnerSolveConfig = InnerSolveConfig(), return_iters: bool = False
):
    """Plain GD on ``0.5 ||X w - y||^2`` with step ``1/||X||^2`` from ``w``."""
    w = np.array(w, dtype=float)
    _check_dims(w, task)
    x, y = task.x, task.y
    target = cfg.residual_tol * (1.0 + float(np.linalg.norm(y)))
    step = 1.0 / task.norm**2 if task.norm > 0 else 0.0
    r = x @ w - y
    res = float(np.linalg.norm(r))
    iters = 0
    while res > target:
        if iters >= cfg.max_inner_iters:
            raise InnerSolveError(res, iters)
        w -= step * (x.T @ r)
        r = x @ w - y
        res = float(np.linalg.norm(r))
        iters += 1
    return (w, iters) if return_iters else w


def modified_objective(w, task: Task, w_star) -> float:
    """``0.5 ||X+ X (w - w*)||^2``."""
    return 0.5 * float(np.sum((task.row_projection @ (np.asarray(w) - w_star)) ** 2))


def modified_gradient(w, task: Task, w_star) -> np.ndarray:
    return task.row_projection @ (np.asarray(w, dtype=float) - w_star)


def modified_sgd_step(w, task: Task, w_star) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    _check_dims(w, task)
    return w - modified_gradient(w, task, w_star)


def rank1_normalized_step(w, x_row, y: float) -> np.ndarray:
    x_row = np.asarray(x_row, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float)
    nsq = float(x_row @ x_row)
    if nsq == 0.0:
        raise ValueError("degenerate rank-1 task: zero row")
    return w - ((x_row @ w - y) / nsq) * x_row


def run(
    collection: TaskCollection,
    ordering: Ordering,
    learner_tag=Learner.KACZMARZ,
    cfg: InnerSolveConfig | None = None,
    w0=None,
) -> Trajectory:
    learner = Learner(learner_tag)
    if ordering.T != collection.T:
        raise ValueError(f"ordering is over {ordering.T} tasks, collection has {collection.T}")
    cfg = cfg or InnerSolveConfig()
    d = collection.dim
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    iterates = np.empty((ordering.k + 1, d))
    iterates[0] = w
    residuals = np.empty(ordering.k)
    inner = []
    for t, m in enumerate(ordering.indices, start=1):
        task = collection.tasks[m]
        try:
            if learner is Learner.KACZMARZ:
                # cached form of w - X+ (X w - y)
                w = task.null_projection @ w + task.pinv @ task.y
            elif learner is Learner.MODIFIED_SGD:
                w = modified_sgd_step(w, task, collection.w_star)
            else:
                w, n = gd_inner_step_to_convergence(w, task, cfg, return_iters=True)
                inner.append(n)
        except Exception as exc:
            raise StepError(t, exc) from exc
        iterates[t] = w
        residuals[t - 1] = float(np.linalg.norm(task.x @ w - task.y))
    iterates.setflags(write=False)
    return Trajectory(iterates, ordering, learner.value, residuals, tuple(inner))


def export_csv(collection: TaskCollection, traj: Trajectory, path) -> None:
    """Per-step rows ``t, tau_t, dist_sq, current_residual`` (``tau_t`` empty at t=0)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "tau_t", "dist_sq", "current_residual"])
        for t in range(traj.k + 1):
            dist = float(np.sum((traj.iterates[t] - collection.w_star) ** 2))
            if t == 0:
                wr.writerow([0, "", repr(dist), ""])
            else:
                wr.writerow(
                    [t, traj.ordering[t - 1], repr(dist), repr(float(traj.per_step_current_residual[t - 1]))]
                )
