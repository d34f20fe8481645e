"""Exponential mechanism: exact and index-accelerated selection.

The exact mechanism scans all candidates; the lazy variant retrieves a
top-k set from an inner-product index and touches only k + C scores.
Also houses complement augmentation (so absolute-value scores become
plain inner products) and the (epsilon, delta) budget arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mips import MipsIndex
from .sampling import (
    InnerProductScores,
    SelectionResult,
    TopKSet,
    _as_source,
    gumbel_max_exact,
    lazy_gumbel,
    lazy_gumbel_private,
    lazy_gumbel_runtime,
)

__all__ = [
    "EmConfig",
    "AugmentedQuerySet",
    "PrivacyBudget",
    "LazyEmResult",
    "em_exact",
    "lazy_em",
    "augment_complements",
    "compose_budget",
]


@dataclass(frozen=True)
class EmConfig:
    """Per-call privacy parameter and score sensitivity."""

    epsilon0: float
    sensitivity: float

    def __post_init__(self):
        if self.epsilon0 <= 0:
            raise ValueError("epsilon0 must be positive")
        if self.sensitivity <= 0:
            raise ValueError("sensitivity must be positive")

    @property
    def scale(self) -> float:
        return self.epsilon0 / (2.0 * self.sensitivity)


def em_exact(scores, cfg: EmConfig, rng: np.random.Generator) -> int:
    """Select index i with probability proportional to exp(scale * x_i)."""
    source = _as_source(scores)
    idx = np.arange(source.n, dtype=np.int64)
    scaled = cfg.scale * source.scores(idx)
    return gumbel_max_exact(scaled, rng).winner


@dataclass(frozen=True)
class AugmentedQuerySet:
    """Query matrix closed under complements: row m+i equals 1 - q_i.

    For distributions p and h, <1 - q, h - p> = -<q, h - p>, so a max
    over the augmented set realizes a max of absolute inner products
    while recording the sign of the winner.
    """

    base: np.ndarray
    augmented: np.ndarray

    @property
    def m(self) -> int:
        return self.base.shape[0]

    def back_map(self, augmented_id: int) -> tuple[int, int]:
        if augmented_id < self.m:
            return augmented_id, +1
        return augmented_id - self.m, -1


def augment_complements(queries: np.ndarray) -> AugmentedQuerySet:
    base = np.asarray(queries, dtype=np.float64)
    if base.ndim != 2:
        raise ValueError("query matrix must be 2-d")
    if base.min() < 0.0 or base.max() > 1.0:
        raise ValueError("query entries must lie in [0, 1]")
    return AugmentedQuerySet(base=base, augmented=np.vstack([base, 1.0 - base]))


@dataclass(frozen=True)
class LazyEmResult:
    original_id: int
    sign: int
    selection: SelectionResult
    score_evaluations: int


def lazy_em(
    index: MipsIndex,
    query: np.ndarray,
    k: int,
    cfg: EmConfig,
    rng: np.random.Generator,
    mode: str = "exact-set",
    slack: float | None = None,
    back_map=None,
) -> LazyEmResult:
    """Index-accelerated exponential mechanism.

    Retrieves the top-k candidates for ``query``, then runs the lazy
    Gumbel sampler over scores scale * <N_i, query>, touching only the
    retrieved set plus the binomially-sized straggler sample. ``mode``
    selects the exact-set, runtime-preserving, or privacy-preserving
    variant; the latter needs a trusted slack bound c.
    """
    if k > index.n:
        raise ValueError("k exceeds candidate count")
    hit = index.query_topk(query, k)
    source = InnerProductScores(index.vectors, np.asarray(query, dtype=np.float64), cfg.scale)
    if mode == "exact-set":
        top = TopKSet(indices=tuple(int(i) for i in hit.indices))
        sel = lazy_gumbel(source, top, rng)
    elif mode == "runtime":
        top = TopKSet(indices=tuple(int(i) for i in hit.indices), slack=0.0 if slack is None else cfg.scale * slack)
        sel = lazy_gumbel_runtime(source, top, rng)
    elif mode == "private":
        if slack is None:
            raise ValueError("private mode requires a slack bound")
        top = TopKSet(indices=tuple(int(i) for i in hit.indices), slack=cfg.scale * slack)
        sel = lazy_gumbel_private(source, top, rng)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if back_map is not None:
        original, sign = back_map(sel.winner)
    else:
        original, sign = sel.winner, +1
    return LazyEmResult(
        original_id=int(original),
        sign=int(sign),
        selection=sel,
        score_evaluations=source.evaluations,
    )


@dataclass(frozen=True)
class PrivacyBudget:
    """Budget split a target (epsilon, delta) into T per-call releases.

    ``epsilon0`` follows the simplified rule epsilon / sqrt(T ln(1/delta))
    (or with an extra factor sqrt(8) for the LP solver variant); the
    advanced-composition readout of the same per-call budget is reported
    alongside for comparison.
    """

    epsilon_total: float
    delta_total: float
    epsilon0: float
    iterations: int
    extra_delta: float = 0.0
    variant: str = "mwem"

    @property
    def reported_delta(self) -> float:
        return self.delta_total + self.extra_delta

    def advanced_composition_epsilon(self, delta_prime: float | None = None) -> float:
        """epsilon0 * sqrt(2 T ln(1/delta')) + 2 T epsilon0^2."""
        dp = self.delta_total if delta_prime is None else delta_prime
        t = self.iterations
        return self.epsilon0 * math.sqrt(2.0 * t * math.log(1.0 / dp)) + 2.0 * t * self.epsilon0**2


def compose_budget(
    epsilon_total: float,
    delta_total: float,
    iterations: int,
    extra_delta: float = 0.0,
    variant: str = "mwem",
) -> PrivacyBudget:
    if epsilon_total <= 0 or delta_total <= 0 or iterations < 1:
        raise ValueError("epsilon, delta and iteration count must be positive")
    if delta_total >= 1.0:
        raise ValueError("delta must be below 1")
    if variant == "mwem":
        epsilon0 = epsilon_total / math.sqrt(iterations * math.log(1.0 / delta_total))
    elif variant == "lp":
        epsilon0 = epsilon_total / math.sqrt(8.0 * iterations * math.log(1.0 / delta_total))
    else:
        raise ValueError(f"unknown budget variant {variant!r}")
    return PrivacyBudget(
        epsilon_total=epsilon_total,
        delta_total=delta_total,
        epsilon0=epsilon0,
        iterations=iterations,
        extra_delta=extra_delta,
        variant=variant,
    )
