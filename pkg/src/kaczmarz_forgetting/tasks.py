"""Jointly realizable collections of linear regression tasks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import linalg
from .linalg import NotRealizableError

REALIZABLE_RTOL = 1e-8


@dataclass(frozen=True)
class Task:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = linalg.as_matrix(self.x, "task x")
        y = linalg.as_vector(self.y, "task y")
        if x.shape[0] < 1:
            raise ValueError("a task needs at least one row")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"task x has {x.shape[0]} rows but y has length {y.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def rows(self) -> int:
        return self.x.shape[0]

    @property
    def cols(self) -> int:
        return self.x.shape[1]

    @cached_property
    def pinv(self) -> np.ndarray:
        return linalg.pinv(self.x)

    @cached_property
    def row_projection(self) -> np.ndarray:
        """``X+ X``."""
        return linalg.row_space_projection(self.x)

    @cached_property
    def null_projection(self) -> np.ndarray:
        """``I - X+ X``."""
        return np.eye(self.cols) - self.row_projection

    @cached_property
    def rank(self) -> int:
        return linalg.numerical_rank(self.x)

    @cached_property
    def norm(self) -> float:
        return linalg.spectral_norm(self.x)

    def residual(self, w) -> np.ndarray:
        return self.x @ w - self.y


@dataclass(frozen=True)
class TaskStats:
    radius_R: float
    avg_rank: float
    max_rank: int
    total_rows_N: int
    dim_d: int
    w_star_norm: float
    num_tasks_T: int


@dataclass(frozen=True)
class TaskCollection:
    tasks: tuple[Task, ...]
    dim: int
    w_star: np.ndarray
    realizability_residual: float
    null_basis: np.ndarray = field(repr=False)

    @property
    def T(self) -> int:
        return len(self.tasks)

    @cached_property
    def stacked_x(self) -> np.ndarray:
        return np.vstack([t.x for t in self.tasks])

    @cached_property
    def stacked_y(self) -> np.ndarray:
        return np.concatenate([t.y for t in self.tasks])

    @cached_property
    def stats(self) -> TaskStats:
        return stats(self)

    @cached_property
    def padded(self) -> dict[str, np.ndarray]:
        """Task data zero-padded to a common row count, for batched evaluation.

        Zero rows leave residual norms and projections unchanged.
        """
        nmax = max(t.rows for t in self.tasks)
        xs = np.zeros((self.T, nmax, self.dim))
        ys = np.zeros((self.T, nmax))
        for m, t in enumerate(self.tasks):
            xs[m, : t.rows] = t.x
            ys[m, : t.rows] = t.y
        return {
            "x": xs,
            "y": ys,
            "null_proj": np.stack([t.null_projection for t in self.tasks]),
            "row_proj": np.stack([t.row_projection for t in self.tasks]),
            "offset": np.stack([t.pinv @ t.y for t in self.tasks]),
            "y_norm": np.array([np.linalg.norm(t.y) for t in self.tasks]),
        }


def build_collection(tasks) -> TaskCollection:
    tasks = tuple(t if isinstance(t, Task) else Task(*t) for t in tasks)
    if not tasks:
        raise ValueError("a task collection needs at least one task")
    d = tasks[0].cols
    for m, t in enumerate(tasks):
        if t.cols != d:
            raise ValueError(f"dimension mismatch: task {m} has {t.cols} columns, expected {d}")
    x = np.vstack([t.x for t in tasks])
    y = np.concatenate([t.y for t in tasks])
    f = linalg.svd(x)
    r = f.numerical_rank
    w_star = (f.vt[:r].T / f.sigma[:r]) @ (f.u[:, :r].T @ y)
    residual = max(float(np.linalg.norm(t.x @ w_star - t.y)) for t in tasks)
    scale = 1.0 + max(float(np.linalg.norm(t.y)) for t in tasks)
    if residual > REALIZABLE_RTOL * scale:
        raise NotRealizableError("not jointly realizable", residual)
    w_star.setflags(write=False)
    null_basis = f.vt[r:].T.copy() if r < d else np.zeros((d, 0))
    return TaskCollection(
        tasks=tasks, dim=d, w_star=w_star, realizability_residual=residual, null_basis=null_basis
    )


def stats(c: TaskCollection) -> TaskStats:
    ranks = [t.rank for t in c.tasks]
    return TaskStats(
        radius_R=max(t.norm for t in c.tasks),
        avg_rank=float(np.mean(ranks)),
        max_rank=max(ranks),
        total_rows_N=sum(t.rows for t in c.tasks),
        dim_d=c.dim,
        w_star_norm=float(np.linalg.norm(c.w_star)),
        num_tasks_T=c.T,
    )


def _as_range(r) -> tuple[int, int]:
    if isinstance(r, (int, np.integer)):
        return int(r), int(r)
    lo, hi = r
    return int(lo), int(hi)


def gen_random_realizable(
    seed: int,
    T: int,
    d: int,
    rank_range=1,
    row_range=None,
    scale: float = 1.0,
) -> TaskCollection:
    """Random collection whose tasks share a Gaussian ground truth.

    Each ``X_m`` is ``scale * G1 @ G2 / sqrt(d)`` with Gaussian factors of
    inner size equal to the sampled rank.  ``row_range`` defaults to the
    upper end of ``rank_range``.
    """
    rlo, rhi = _as_range(rank_range)
    nlo, nhi = _as_range(row_range if row_range is not None else rhi)
    if T < 1 or d < 1:
        raise ValueError("need T >= 1 and d >= 1")
    if rlo < 1 or rlo > rhi or nlo < 1 or nlo > nhi:
        raise ValueError(f"bad ranges: rank {rank_range}, rows {row_range}")
    if rlo > min(nhi, d):
        raise ValueError(f"infeasible: rank {rlo} exceeds min(rows={nhi}, d={d})")
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal(d)
    tasks = []
    for _ in range(T):
        n = int(rng.integers(max(nlo, rlo), nhi + 1))
        r = int(rng.integers(rlo, min(rhi, n, d) + 1))
        x = scale * (rng.standard_normal((n, r)) @ rng.standard_normal((r, d))) / math.sqrt(d)
        tasks.append(Task(x, x @ truth))
    return build_collection(tasks)


def gen_two_task_clone(seed: int, T: int, d: int, angle_eps: float) -> TaskCollection:
    """Two unit rank-1 tasks at angle ``angle_eps``, cloned to ``T`` tasks.

    Direction A gets ``ceil(T/2)`` copies, direction B ``floor(T/2)``; copies
    are interleaved A, B, A, B, ...
    """
    if d < 2 or T < 2:
        raise ValueError("need d >= 2 and T >= 2")
    if not 0.0 < angle_eps < math.pi / 2 + 1e-15:
        raise ValueError("angle_eps must lie in (0, pi/2]")
    a = np.zeros(d)
    a[0] = 1.0
    b = np.zeros(d)
    b[0], b[1] = math.cos(angle_eps), math.sin(angle_eps)
    truth = np.random.default_rng(seed).standard_normal(d)
    ta = Task(a[None, :], [a @ truth])
    tb = Task(b[None, :], [b @ truth])
    return build_collection([ta if m % 2 == 0 else tb for m in range(T)])


def normalized(c: TaskCollection) -> TaskCollection:
    """Rescale data and labels so that ``||w*|| = R = 1``."""
    R = c.stats.radius_R
    wn = c.stats.w_star_norm
    if R == 0 or wn == 0:
        raise ValueError("cannot normalize a collection with R = 0 or w* = 0")
    return build_collection([Task(t.x / R, t.y / (R * wn)) for t in c.tasks])


def to_json(c: TaskCollection) -> str:
    doc = {
        "dim": c.dim,
        "tasks": [
            {
                "rows": t.rows,
                "cols": t.cols,
                "x_entries": t.x.reshape(-1).tolist(),
                "y_entries": t.y.tolist(),
            }
            for t in c.tasks
        ],
    }
    return json.dumps(doc)


def from_json(text: str) -> TaskCollection:
    doc = json.loads(text)
    tasks = []
    for entry in doc["tasks"]:
        x = np.array(entry["x_entries"], dtype=float).reshape(entry["rows"], entry["cols"])
        tasks.append(Task(x, entry["y_entries"]))
    c = build_collection(tasks)
    if c.dim != doc["dim"]:
        raise ValueError(f"declared dim {doc['dim']} does not match task columns {c.dim}")
    return c


def save(c: TaskCollection, path) -> None:
    Path(path).write_text(to_json(c))


def load(path) -> TaskCollection:
    return from_json(Path(path).read_text())
