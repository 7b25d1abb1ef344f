"""Closed-form upper bounds on expected loss and forgetting.

Range guards raise ``BoundRangeError``; nothing is clamped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .tasks import TaskStats

THEOREM_TAGS = (
    "param_dep_wr",
    "universal_wr",
    "wor",
    "sgd_last",
    "sgd_wor",
    "pocs",
    "classification",
)


class BoundRangeError(ValueError):
    pass


@dataclass(frozen=True)
class BoundReport:
    theorem_tag: str
    k: int
    loss_bound: float | None
    forgetting_bound: float | None
    inputs_digest: dict = field(default_factory=dict)
    scale: float = 1.0  # ||w*||^2 R^2

    @property
    def loss_bound_normalized(self) -> float | None:
        return None if self.loss_bound is None or self.scale == 0 else self.loss_bound / self.scale

    @property
    def forgetting_bound_normalized(self) -> float | None:
        if self.forgetting_bound is None or self.scale == 0:
            return None
        return self.forgetting_bound / self.scale


def dimension_factor(d: int, avg_rank: float, T: int) -> float:
    """``min(sqrt(d - rbar), sqrt(T rbar))``."""
    return min(math.sqrt(max(d - avg_rank, 0.0)), math.sqrt(T * avg_rank))


def bound_param_dep_wr(stats: TaskStats, k: int) -> BoundReport:
    if k < 3:
        raise BoundRangeError(f"parameter-dependent bound needs k >= 3, got {k}")
    scale = stats.w_star_norm**2 * stats.radius_R**2
    g = dimension_factor(stats.dim_d, stats.avg_rank, stats.num_tasks_T)
    return BoundReport(
        "param_dep_wr",
        k,
        loss_bound=g * scale / (2 * math.e * (k - 1)),
        forgetting_bound=3 * g * scale / (2 * (k - 2)),
        inputs_digest=_digest(stats),
        scale=scale,
    )


def bound_universal_wr(w_star_norm: float, R: float, k: int) -> BoundReport:
    if k < 2:
        raise BoundRangeError(f"universal bound needs k >= 2, got {k}")
    scale = w_star_norm**2 * R**2
    return BoundReport(
        "universal_wr",
        k,
        loss_bound=2 * scale / k**0.25,
        forgetting_bound=5 * scale / (k - 1) ** 0.25,
        inputs_digest={"w_star_norm": w_star_norm, "R": R},
        scale=scale,
    )


def bound_wor(stats: TaskStats, k: int) -> BoundReport:
    T = stats.num_tasks_T
    if not 2 <= k <= T:
        raise BoundRangeError(f"without-replacement bound needs 2 <= k <= T={T}, got {k}")
    scale = stats.w_star_norm**2 * stats.radius_R**2
    value = min(7 / (k - 1) ** 0.25, (stats.dim_d - stats.avg_rank + 1) / (k - 1)) * scale
    return BoundReport("wor", k, value, value, _digest(stats), scale)


def _check_step(eta: float, beta: float) -> None:
    if not (eta > 0 and beta > 0 and eta * beta < 2):
        raise BoundRangeError(f"step size must satisfy 0 < eta < 2/beta (eta={eta}, beta={beta})")


def _rate_exponent(eta: float, beta: float) -> float:
    x = eta * beta
    return 1 - x * (1 - x / 4)


def bound_sgd_last(eta: float, beta: float, D: float, T: int) -> float:
    _check_step(eta, beta)
    if T < 1:
        raise BoundRangeError(f"T must be >= 1, got {T}")
    return math.e * D**2 / (2 * eta * (2 - eta * beta) * T ** _rate_exponent(eta, beta))


def bound_sgd_wor(eta: float, beta: float, D: float, T: int, n: int | None = None) -> float:
    _check_step(eta, beta)
    if T < 2 or (n is not None and T > n - 1):
        raise BoundRangeError(f"without-replacement SGD bound needs 2 <= T <= n-1, got T={T}, n={n}")
    first = math.e * D**2 / (eta * (2 - eta * beta) * T ** _rate_exponent(eta, beta))
    return first + 4 * beta**2 * eta * D**2 / T


def bound_sgd_wor_unit_step(beta: float, D: float, T: int) -> float:
    """The ``eta = 1/beta`` specialization ``7 beta D^2 / T^(1/4)``."""
    if T < 2:
        raise BoundRangeError(f"T must be >= 2, got {T}")
    return 7 * beta * D**2 / T**0.25


def bound_pocs(k: int, d0_sq: float) -> float:
    if k < 1 or d0_sq < 0:
        raise BoundRangeError(f"need k >= 1 and d0_sq >= 0 (k={k}, d0_sq={d0_sq})")
    return 7 * d0_sq / k**0.25


def bound_classification(k: int, w_star_norm: float, R: float) -> float:
    if k < 1:
        raise BoundRangeError(f"need k >= 1, got {k}")
    return 7 * w_star_norm**2 * R**2 / k**0.25


def _digest(stats: TaskStats) -> dict:
    return {
        "w_star_norm": stats.w_star_norm,
        "R": stats.radius_R,
        "d": stats.dim_d,
        "T": stats.num_tasks_T,
        "avg_rank": stats.avg_rank,
    }


def report_for(tag: str, stats: TaskStats, k: int) -> BoundReport:
    """Bound report for the continual-regression theorems, keyed by tag."""
    if tag == "param_dep_wr":
        return bound_param_dep_wr(stats, k)
    if tag == "universal_wr":
        return bound_universal_wr(stats.w_star_norm, stats.radius_R, k)
    if tag == "wor":
        return bound_wor(stats, k)
    raise ValueError(f"no task-collection bound for theorem tag {tag!r}")
