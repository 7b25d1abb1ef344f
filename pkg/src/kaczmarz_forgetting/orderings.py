"""Task orderings ``tau: [k] -> [T]``.

Indices are zero-based everywhere, including exported manifests.  Random
policies draw from ``numpy.random.default_rng(seed)`` (PCG64), which gives
identical streams on every platform for a given seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Policy(str, Enum):
    WITH_REPLACEMENT = "with_replacement"
    WITHOUT_REPLACEMENT = "without_replacement"
    CYCLIC = "cyclic"
    EXPLICIT = "explicit"


POLICY_ALIASES = {
    "wr": Policy.WITH_REPLACEMENT,
    "wor": Policy.WITHOUT_REPLACEMENT,
    "cyclic": Policy.CYCLIC,
    "explicit": Policy.EXPLICIT,
}


def parse_policy(name) -> Policy:
    if isinstance(name, Policy):
        return name
    if name in POLICY_ALIASES:
        return POLICY_ALIASES[name]
    return Policy(name)


class OrderingExhausted(ValueError):
    pass


@dataclass(frozen=True)
class Ordering:
    indices: tuple[int, ...]
    policy: Policy
    T: int
    seed: int | None = None

    def __post_init__(self):
        if len(self.indices) < 1:
            raise ValueError("k >= 1 required")
        if any(i < 0 or i >= self.T for i in self.indices):
            raise ValueError(f"ordering indices must lie in [0, {self.T})")
        if self.policy is Policy.WITHOUT_REPLACEMENT and len(set(self.indices)) != len(self.indices):
            raise ValueError("without-replacement ordering has repeated indices")

    @property
    def k(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, t):
        return self.indices[t]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


def _check(T: int, k: int) -> None:
    if T < 1:
        raise ValueError("T >= 1 required")
    if k < 1:
        raise ValueError("k >= 1 required")


def _wr(rng: np.random.Generator, T: int, k: int) -> np.ndarray:
    return rng.integers(0, T, size=k)


def _wor(rng: np.random.Generator, T: int, k: int) -> np.ndarray:
    return rng.permutation(T)[:k]


def sample_with_replacement(seed: int, T: int, k: int) -> Ordering:
    _check(T, k)
    idx = _wr(np.random.default_rng(seed), T, k)
    return Ordering(tuple(int(i) for i in idx), Policy.WITH_REPLACEMENT, T, seed)


def sample_without_replacement(seed: int, T: int, k: int) -> Ordering:
    _check(T, k)
    if k > T:
        raise OrderingExhausted(f"without-replacement ordering exhausted: k={k} > T={T}")
    idx = _wor(np.random.default_rng(seed), T, k)
    return Ordering(tuple(int(i) for i in idx), Policy.WITHOUT_REPLACEMENT, T, seed)


def cyclic(T: int, k: int) -> Ordering:
    _check(T, k)
    return Ordering(tuple(t % T for t in range(k)), Policy.CYCLIC, T)


def explicit(indices, T: int) -> Ordering:
    return Ordering(tuple(int(i) for i in indices), Policy.EXPLICIT, T)


def make(policy, T: int, k: int, seed: int | None = None) -> Ordering:
    policy = parse_policy(policy)
    if policy is Policy.WITH_REPLACEMENT:
        return sample_with_replacement(seed, T, k)
    if policy is Policy.WITHOUT_REPLACEMENT:
        return sample_without_replacement(seed, T, k)
    if policy is Policy.CYCLIC:
        return cyclic(T, k)
    raise ValueError("explicit orderings need their indices; use explicit()")


def sample_batch(policy, seeds, T: int, k: int) -> np.ndarray:
    """Stack the index arrays of ``make(policy, T, k, s)`` for each seed.

    Row ``r`` equals ``make(policy, T, k, seeds[r]).indices`` exactly.
    """
    policy = parse_policy(policy)
    _check(T, k)
    seeds = list(seeds)
    out = np.empty((len(seeds), k), dtype=np.int64)
    if policy is Policy.CYCLIC:
        out[:] = np.arange(k) % T
        return out
    if policy is Policy.WITHOUT_REPLACEMENT and k > T:
        raise OrderingExhausted(f"without-replacement ordering exhausted: k={k} > T={T}")
    draw = _wr if policy is Policy.WITH_REPLACEMENT else _wor
    for r, s in enumerate(seeds):
        out[r] = draw(np.random.default_rng(s), T, k)
    return out
