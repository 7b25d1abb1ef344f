"""Projections onto convex sets and sequential max-margin classification."""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .learners import Trajectory
from .linalg import NumericalError
from .orderings import Ordering

PROJECTION_TOL = 1e-9
DYKSTRA_MAX_CYCLES = 100_000
EXACT_POLY_MAX = 4  # polyhedra with at most this many halfspaces use active-set enumeration


class ProjectionError(NumericalError):
    def __init__(self, message: str, violation: float):
        super().__init__(f"{message} (worst violation={violation:.3e})")
        self.message, self.violation = message, violation

    def __reduce__(self):
        return type(self), (self.message, self.violation)


class ConvexSet:
    kind = "abstract"
    projection_tolerance = PROJECTION_TOL

    def project(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def violation(self, v: np.ndarray) -> float:
        """Largest constraint violation at ``v`` (0 when feasible)."""
        raise NotImplementedError

    def distance(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(v - self.project(v)))


@dataclass(frozen=True, eq=False)
class AffineSet(ConvexSet):
    """``{w : X w = y}``."""

    x: np.ndarray
    y: np.ndarray
    kind = "affine_solution_set"

    def __post_init__(self):
        x = linalg.as_matrix(self.x)
        y = linalg.as_vector(self.y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "_pinv", linalg.pinv(x))
        linalg.min_norm_solve(x, y)  # raises if the set is empty

    def project(self, v):
        return v - self._pinv @ (self.x @ v - self.y)

    def violation(self, v):
        return float(np.max(np.abs(self.x @ v - self.y)))


@dataclass(frozen=True, eq=False)
class Halfspace(ConvexSet):
    """``{w : a . w >= b}``."""

    a: np.ndarray
    b: float
    kind = "halfspace"

    def __post_init__(self):
        a = linalg.as_vector(self.a)
        if not np.any(a):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "_nsq", float(a @ a))

    def project(self, v):
        gap = self.b - float(self.a @ v)
        return v + (gap / self._nsq) * self.a if gap > 0 else np.array(v, dtype=float)

    def violation(self, v):
        return max(0.0, self.b - float(self.a @ v))


@dataclass(frozen=True, eq=False)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", linalg.as_vector(self.center))
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    def project(self, v):
        diff = v - self.center
        dist = float(np.linalg.norm(diff))
        if dist <= self.radius:
            return np.array(v, dtype=float)
        return self.center + (self.radius / dist) * diff

    def violation(self, v):
        return max(0.0, float(np.linalg.norm(v - self.center)) - self.radius)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    lo: np.ndarray
    hi: np.ndarray
    kind = "box"

    def __post_init__(self):
        lo, hi = linalg.as_vector(self.lo), linalg.as_vector(self.hi)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def project(self, v):
        return np.clip(v, self.lo, self.hi)

    def violation(self, v):
        return float(max(np.max(self.lo - v), np.max(v - self.hi), 0.0))


@dataclass(frozen=True, eq=False)
class Polyhedron(ConvexSet):
    """Intersection of halfspaces ``{w : A w >= b}``."""

    halfspaces: tuple[Halfspace, ...]
    projection_tolerance: float = PROJECTION_TOL
    kind = "halfspace_polyhedron"

    def __post_init__(self):
        hs = tuple(self.halfspaces)
        if not hs:
            raise ValueError("polyhedron needs at least one halfspace")
        object.__setattr__(self, "halfspaces", hs)
        object.__setattr__(self, "_A", np.stack([h.a for h in hs]))
        object.__setattr__(self, "_b", np.array([h.b for h in hs]))

    def violation(self, v):
        return float(max(np.max(self._b - self._A @ v), 0.0))

    def project(self, v):
        v = np.asarray(v, dtype=float)
        if self.violation(v) == 0.0:
            return v.copy()
        if len(self.halfspaces) <= EXACT_POLY_MAX:
            w = _active_set_projection(self._A, self._b, v)
            if w is not None:
                return w
        return dykstra(self.halfspaces, v, self.projection_tolerance)


def _active_set_projection(A: np.ndarray, b: np.ndarray, v: np.ndarray):
    """Exact projection onto a small polyhedron by enumerating active sets.

    Returns the first KKT point found (the projection is unique), or None if
    degeneracy defeats the enumeration.
    """
    m = A.shape[0]
    slack = 1e-12 * (1 + np.abs(b))
    for size in range(1, m + 1):
        for S in itertools.combinations(range(m), size):
            S = list(S)
            As = A[S]
            lam = np.linalg.lstsq(As @ As.T, b[S] - As @ v, rcond=None)[0]
            if np.any(lam < -1e-14):
                continue
            w = v + As.T @ lam
            if np.all(A @ w >= b - slack):
                return w
    return None


def dykstra(sets, v, tol: float = PROJECTION_TOL, max_cycles: int = DYKSTRA_MAX_CYCLES) -> np.ndarray:
    """Nearest point of the intersection of ``sets`` to ``v`` by Dykstra's algorithm."""
    sets = list(sets)
    x = np.array(v, dtype=float)
    incr = [np.zeros_like(x) for _ in sets]
    for _ in range(max_cycles):
        start = x.copy()
        change = 0.0
        for i, s in enumerate(sets):
            y = s.project(x + incr[i])
            new_incr = x + incr[i] - y
            # x can sit still for a cycle while the corrections keep moving
            change = max(change, float(np.linalg.norm(new_incr - incr[i])))
            incr[i] = new_incr
            x = y
        change = max(change, float(np.linalg.norm(x - start)))
        if change <= tol and max(s.violation(x) for s in sets) <= 10 * tol:
            return x
    worst = max(s.violation(x) for s in sets)
    raise ProjectionError("Dykstra iteration cap exceeded", worst)


def project(s: ConvexSet, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return s.project(v)


def intersection_certificate(sets, w0=None, tol: float = 1e-6):
    """Project ``w0`` (default origin) onto the intersection; return ``(point, worst_violation, ok)``."""
    sets = list(sets)
    d = _dim(sets[0])
    w0 = np.zeros(d) if w0 is None else np.asarray(w0, dtype=float)
    try:
        x = dykstra(sets, w0, tol=1e-11)
    except ProjectionError as exc:
        return None, exc.violation, False
    worst = max(s.violation(x) for s in sets)
    return x, worst, worst <= tol


def _dim(s: ConvexSet) -> int:
    for attr in ("a", "center", "lo"):
        if hasattr(s, attr):
            return getattr(s, attr).shape[0]
    if isinstance(s, AffineSet):
        return s.x.shape[1]
    return s.halfspaces[0].a.shape[0]


def pocs_run(sets, w0, ordering: Ordering) -> Trajectory:
    sets = list(sets)
    if ordering.T != len(sets):
        raise ValueError(f"ordering is over {ordering.T} sets, got {len(sets)}")
    w = np.array(w0, dtype=float)
    it = np.empty((ordering.k + 1, w.shape[0]))
    it[0] = w
    res = np.empty(ordering.k)
    for t, m in enumerate(ordering.indices, start=1):
        w = sets[m].project(w)
        it[t] = w
        res[t - 1] = sets[m].violation(w)
    it.setflags(write=False)
    return Trajectory(it, ordering, "pocs", res)


def pocs_residual(sets, w) -> float:
    """``(1/2T) sum_m dist^2(w, C_m)``."""
    w = np.asarray(w, dtype=float)
    return sum(s.distance(w) ** 2 for s in sets) / (2 * len(sets))


def pocs_forgetting(sets, traj: Trajectory, k: int) -> float:
    """``(1/2k) sum_{t<=k} ||w_k - Pi_tau(t)(w_k)||^2``."""
    if not 1 <= k <= traj.k:
        raise IndexError(f"k={k} outside [1, {traj.k}]")
    wk = traj.iterates[k]
    counts = Counter(traj.ordering.indices[:k])
    return sum(n * sets[m].distance(wk) ** 2 for m, n in counts.items()) / (2 * k)


def pocs_regret(sets, traj: Trajectory) -> float:
    """``sum_t 0.5 dist^2(w_{t-1}, C_tau(t))`` along the whole run."""
    return sum(
        0.5 * sets[m].distance(traj.iterates[t]) ** 2 for t, m in enumerate(traj.ordering.indices)
    )


# --- classification ---------------------------------------------------------


@dataclass(frozen=True)
class ClassificationTask:
    examples: tuple[tuple[np.ndarray, int], ...]

    def __post_init__(self):
        ex = tuple((linalg.as_vector(x), int(y)) for x, y in self.examples)
        if not ex:
            raise ValueError("classification task needs at least one example")
        if any(y not in (-1, 1) for _, y in ex):
            raise ValueError("labels must be +1 or -1")
        object.__setattr__(self, "examples", ex)

    @property
    def radius(self) -> float:
        return max(float(np.linalg.norm(x)) for x, _ in self.examples)


@dataclass(frozen=True)
class RegularizedConfig:
    lam: float
    inner_tol: float = 1e-10
    max_inner_iters: int = 1_000_000

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


def max_margin_sets(tasks) -> list[ConvexSet]:
    out = []
    for task in tasks:
        hs = [Halfspace(y * x, 1.0) for x, y in task.examples]
        out.append(hs[0] if len(hs) == 1 else Polyhedron(tuple(hs)))
    return out


def regularized_step(task: ClassificationTask, w_prev, cfg: RegularizedConfig, return_trace: bool = False):
    """Minimize ``sum exp(-y w.x) + lam/2 ||w - w_prev||^2`` by backtracking GD."""
    X = np.stack([y * x for x, y in task.examples])  # signed examples
    w_prev = np.asarray(w_prev, dtype=float)

    def obj(w):
        return float(np.sum(np.exp(-X @ w)) + 0.5 * cfg.lam * np.sum((w - w_prev) ** 2))

    def grad(w):
        return -X.T @ np.exp(-X @ w) + cfg.lam * (w - w_prev)

    w = w_prev.copy()
    f = obj(w)
    trace = [f]
    step = 1.0
    for _ in range(cfg.max_inner_iters):
        g = grad(w)
        gn = float(g @ g)
        if math.sqrt(gn) <= cfg.inner_tol:
            return (w, trace) if return_trace else w
        step *= 2.0
        while True:
            cand = w - step * g
            fc = obj(cand)
            slack = 4 * np.finfo(float).eps * abs(f)
            if 0.5 * step * gn > slack:
                if fc <= f - 0.5 * step * gn:
                    break
            elif fc <= f + slack:
                # decrease below float resolution of f: use the gradient norm as merit
                gc = grad(cand)
                if float(gc @ gc) < gn:
                    break
            step *= 0.5
            if step < 1e-300:
                raise NumericalError("line search failed in regularized step")
        w, f = cand, fc
        trace.append(f)
    raise NumericalError(f"regularized inner solve hit {cfg.max_inner_iters} iterations")


def regularized_classification_run(tasks, cfg: RegularizedConfig, ordering: Ordering, k: int | None = None, w0=None):
    tasks = list(tasks)
    k = ordering.k if k is None else k
    d = tasks[0].examples[0][0].shape[0]
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)
    it = np.empty((k + 1, d))
    it[0] = w
    for t in range(k):
        w = regularized_step(tasks[ordering[t]], w, cfg)
        it[t + 1] = w
    it.setflags(write=False)
    return Trajectory(it, ordering, "regularized", np.zeros(k))


def angle(u, v) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0 if nu == nv else math.pi / 2
    return float(np.arccos(np.clip(u @ v / (nu * nv), -1.0, 1.0)))


def alignment_angles(tasks, ordering: Ordering, lambdas=(1.0, 1e-1, 1e-2, 1e-3)) -> dict[float, list[float]]:
    """Per-step angle between regularized iterates and max-margin projection iterates."""
    proj = pocs_run(max_margin_sets(tasks), np.zeros(tasks[0].examples[0][0].shape[0]), ordering)
    out = {}
    for lam in lambdas:
        reg = regularized_classification_run(tasks, RegularizedConfig(lam), ordering)
        out[lam] = [angle(reg.iterates[t], proj.iterates[t]) for t in range(1, ordering.k + 1)]
    return out


def load_classification_tasks(path) -> list[ClassificationTask]:
    """Read ``label x1 ... xd`` lines; blank lines separate tasks."""
    tasks, current = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                continue
            if not line:
                if current:
                    tasks.append(ClassificationTask(tuple(current)))
                    current = []
                continue
            parts = line.replace(",", " ").split()
            label = int(float(parts[0]))
            current.append((np.array([float(p) for p in parts[1:]]), label))
    if current:
        tasks.append(ClassificationTask(tuple(current)))
    return tasks


def write_classification_tasks(tasks, path) -> None:
    with open(path, "w") as fh:
        for j, task in enumerate(tasks):
            if j:
                fh.write("\n")
            for x, y in task.examples:
                fh.write(f"{y:+d} " + " ".join(repr(float(v)) for v in x) + "\n")


# --- random instance generators --------------------------------------------


@dataclass(frozen=True)
class ConvexFamily:
    sets: tuple[ConvexSet, ...]
    w0: np.ndarray
    nearest: np.ndarray  # projection of w0 onto the intersection
    d0_sq: float
    certificate_violation: float
    interior_point: np.ndarray = field(repr=False)


def gen_convex_family(seed: int, T: int, d: int, kinds=("halfspace", "ball", "box"), spread: float = 3.0) -> ConvexFamily:
    """Random halfspaces, balls and boxes sharing a known point ``c``."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(d)
    sets: list[ConvexSet] = []
    for m in range(T):
        kind = kinds[m % len(kinds)]
        if kind == "halfspace":
            a = rng.standard_normal(d)
            a /= np.linalg.norm(a)
            sets.append(Halfspace(a, float(a @ c) - rng.uniform(0.0, 0.5)))
        elif kind == "ball":
            off = rng.standard_normal(d)
            off *= rng.uniform(0.5, 2.0) / np.linalg.norm(off)
            sets.append(Ball(c + off, float(np.linalg.norm(off)) + rng.uniform(0.05, 0.5)))
        elif kind == "box":
            sets.append(Box(c - rng.uniform(0.05, 1.5, d), c + rng.uniform(0.05, 1.5, d)))
        else:
            raise ValueError(f"unknown set kind {kind!r}")
    w0 = c + spread * rng.standard_normal(d)
    nearest, worst, ok = intersection_certificate(sets, w0)
    if not ok:
        raise ProjectionError("could not certify a nonempty intersection", worst)
    return ConvexFamily(tuple(sets), w0, nearest, float(np.sum((w0 - nearest) ** 2)), worst, c)


@dataclass(frozen=True)
class SeparableInstance:
    tasks: tuple[ClassificationTask, ...]
    w_star: np.ndarray  # min-norm point of the margin-set intersection
    R: float
    certificate_violation: float


def gen_separable_tasks(seed: int, T: int, d: int, max_examples: int = 3, min_margin: float = 0.1) -> SeparableInstance:
    """Jointly separable tasks labelled by a random hyperplane through the origin."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    tasks = []
    for _ in range(T):
        n = int(rng.integers(1, max_examples + 1))
        ex = []
        while len(ex) < n:
            x = rng.standard_normal(d)
            s = float(u @ x)
            if abs(s) >= min_margin:
                ex.append((x, 1 if s > 0 else -1))
        tasks.append(ClassificationTask(tuple(ex)))
    halfspaces = [h for s in max_margin_sets(tasks) for h in (s.halfspaces if isinstance(s, Polyhedron) else (s,))]
    w_star, worst, ok = intersection_certificate(halfspaces)
    if not ok:
        raise ProjectionError("tasks are not jointly separable", worst)
    R = max(t.radius for t in tasks)
    return SeparableInstance(tuple(tasks), w_star, R, worst)
