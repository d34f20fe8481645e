"""Gumbel noise primitives and lazy top-k softmax selection.

The samplers here draw an index i with probability proportional to
exp(x_i) without evaluating every score: given the (approximate) top-k
score set, only k + C scores are touched, where C is a binomially-sized
count of "straggler" candidates whose conditional Gumbel noise could
still win the argmax.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ScoreSource",
    "MaterializedScores",
    "InnerProductScores",
    "TopKSet",
    "SelectionResult",
    "sample_gumbel",
    "sample_truncated_gumbel",
    "gumbel_max_exact",
    "lazy_gumbel",
    "lazy_gumbel_runtime",
    "lazy_gumbel_private",
    "lazy_gumbel_batch",
    "sample_binomial",
    "sample_distinct_complement",
    "gumbel_exceed_probability",
]


class ScoreSource:
    """Provider of candidate scores, evaluated on demand.

    Subclasses expose ``n`` candidates and count every score evaluation in
    ``evaluations`` so sublinear-access claims can be asserted by tests.
    """

    n: int
    evaluations: int

    def scores(self, indices: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class MaterializedScores(ScoreSource):
    """Scores backed by an explicit finite vector."""

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("scores must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError("scores must be finite")
        self.values = arr
        self.n = int(arr.size)
        self.evaluations = 0

    def scores(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        self.evaluations += int(indices.size)
        return self.values[indices]


class InnerProductScores(ScoreSource):
    """Scores of the form scale * <vectors[i], query>, computed lazily."""

    def __init__(self, vectors: np.ndarray, query: np.ndarray, scale: float = 1.0):
        vectors = np.asarray(vectors, dtype=np.float64)
        query = np.asarray(query, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != query.shape[0]:
            raise ValueError("vector/query dimension mismatch")
        self.vectors = vectors
        self.query = query
        self.scale = float(scale)
        self.n = int(vectors.shape[0])
        self.evaluations = 0

    def scores(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        self.evaluations += int(indices.size)
        return self.scale * (self.vectors[indices] @ self.query)


@dataclass(frozen=True)
class TopKSet:
    """A size-k candidate index set, optionally with approximation slack.

    When ``slack`` is set to c, the caller asserts that no excluded score
    exceeds the smallest included score by more than c.
    """

    indices: tuple[int, ...]
    slack: float | None = None

    def __post_init__(self):
        if len(self.indices) == 0:
            raise ValueError("top-k set must be nonempty")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("top-k indices must be distinct")
        if self.slack is not None and self.slack < 0:
            raise ValueError("approximation slack must be nonnegative")


@dataclass(frozen=True)
class SelectionResult:
    winner: int
    noisy_score: float
    extra_samples: int
    margin: float


def sample_gumbel(rng: np.random.Generator) -> float:
    """One draw from Gumbel(0, 1) via -ln(-ln U), redrawing boundary U."""
    while True:
        u = rng.random()
        if u <= 0.0:
            continue
        t = -math.log(u)
        if t <= 0.0:
            continue
        return -math.log(t)


def _gumbel_array(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    bad = u <= 0.0
    while np.any(bad):
        u[bad] = rng.random(int(bad.sum()))
        bad = u <= 0.0
    return -np.log(-np.log(u))


def gumbel_exceed_probability(bound: float) -> float:
    """P[Gumbel(0,1) > bound] = 1 - exp(-exp(-bound)), computed stably.

    For large bounds the naive expression cancels to 0; the expm1 form
    keeps the ~exp(-bound) tail.
    """
    if bound < -700.0:  # exp(-bound) would overflow; the mass is all above
        return 1.0
    return -math.expm1(-math.exp(-bound))


def sample_truncated_gumbel(bound: float, rng: np.random.Generator) -> float:
    """Gumbel(0,1) conditioned to exceed ``bound``.

    Inverse-CDF sampling with U ~ Uniform(exp(-exp(-bound)), 1). The
    uniform is parameterized by its distance w below 1 so that the
    log1p form survives bounds where exp(-exp(-bound)) rounds to 1.
    """
    if not math.isfinite(bound):
        raise ValueError("truncation bound must be finite")
    tail = gumbel_exceed_probability(bound)
    while True:
        w = tail * (1.0 - rng.random())
        if w <= 0.0:
            continue
        t = -math.log1p(-w)  # = -ln U
        if t <= 0.0:
            continue
        g = -math.log(t)
        if g > bound:
            return g


def _truncated_gumbel_array(bound: float, count: int, rng: np.random.Generator) -> np.ndarray:
    tail = gumbel_exceed_probability(bound)
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        while True:
            w = tail * (1.0 - rng.random())
            if w <= 0.0:
                continue
            t = -math.log1p(-w)
            if t <= 0.0:
                continue
            g = -math.log(t)
            if g > bound:
                out[i] = g
                break
    return out


def _as_source(scores) -> ScoreSource:
    if isinstance(scores, ScoreSource):
        return scores
    return MaterializedScores(scores)


def _argmax_lowest(indices: np.ndarray, values: np.ndarray) -> tuple[int, float]:
    # ties are measure-zero under continuous noise; break them toward the
    # lowest index so identical seeds give identical winners
    best = values.max()
    return int(indices[values == best].min()), float(best)


def gumbel_max_exact(scores, rng: np.random.Generator) -> SelectionResult:
    """Exact Gumbel-max sampling: winner i with probability softmax(x)_i."""
    source = _as_source(scores)
    idx = np.arange(source.n, dtype=np.int64)
    noisy = source.scores(idx) + _gumbel_array(source.n, rng)
    winner, best = _argmax_lowest(idx, noisy)
    return SelectionResult(winner=winner, noisy_score=best, extra_samples=source.n, margin=0.0)


def sample_binomial(trials: int, p: float, rng: np.random.Generator) -> int:
    """Exact Binomial(trials, p) draw in O(trials * p) expected work.

    Small means use geometric waiting-time skips so the cost never scales
    with ``trials`` when p is tiny; larger means defer to the generator's
    exact binomial sampler.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    if trials == 0 or p == 0.0:
        return 0
    if p == 1.0:
        return trials
    if trials * p <= 30.0:
        log_q = math.log1p(-p)
        count = 0
        pos = 0
        while True:
            u = rng.random()
            if u <= 0.0:
                continue
            skip = math.log(u) / log_q if log_q < 0.0 else math.inf
            if skip >= trials - pos:
                return count
            pos += int(skip) + 1
            if pos > trials:
                return count
            count += 1
    return int(rng.binomial(trials, p))


def sample_distinct_complement(
    n: int,
    excluded: TopKSet | Iterable[int],
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Uniform random ``count``-subset of [n] minus the excluded indices."""
    if isinstance(excluded, TopKSet):
        excluded = excluded.indices
    excluded_set = set(int(i) for i in excluded)
    available = n - len(excluded_set)
    if count > available:
        raise ValueError("requested more indices than the complement holds")
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if 3 * count >= available:
        # dense request: n = O(count + |excluded|) here, so a full pass is
        # within the O(C + k) budget
        comp = np.setdiff1d(np.arange(n, dtype=np.int64), np.fromiter(excluded_set, dtype=np.int64, count=len(excluded_set)))
        return rng.choice(comp, size=count, replace=False)
    chosen: list[int] = []
    seen = set(excluded_set)
    while len(chosen) < count:
        i = int(rng.integers(0, n))
        if i in seen:
            continue
        seen.add(i)
        chosen.append(i)
    return np.asarray(chosen, dtype=np.int64)


def _lazy_select(
    scores,
    top: TopKSet,
    rng: np.random.Generator,
    margin_offset: float,
) -> SelectionResult:
    source = _as_source(scores)
    n = source.n
    members = np.asarray(sorted(top.indices), dtype=np.int64)
    k = members.size
    if k > n:
        raise ValueError("top-k set larger than the candidate count")
    if members[0] < 0 or members[-1] >= n:
        raise ValueError("top-k indices out of range")

    xs = source.scores(members)
    noisy_s = xs + _gumbel_array(k, rng)
    high = float(noisy_s.max())
    low = float(xs.min())
    margin = high - low - margin_offset

    tail = gumbel_exceed_probability(margin)
    extra = sample_binomial(n - k, tail, rng)
    if extra > 0:
        straggler_idx = sample_distinct_complement(n, top, extra, rng)
        straggler_noisy = source.scores(straggler_idx) + _truncated_gumbel_array(margin, extra, rng)
        all_idx = np.concatenate([members, straggler_idx])
        all_noisy = np.concatenate([noisy_s, straggler_noisy])
    else:
        all_idx, all_noisy = members, noisy_s
    winner, best = _argmax_lowest(all_idx, all_noisy)
    return SelectionResult(winner=winner, noisy_score=best, extra_samples=int(extra), margin=float(margin))


def lazy_gumbel(scores, top: TopKSet, rng: np.random.Generator) -> SelectionResult:
    """Softmax sampling that touches only the exact top-k plus stragglers.

    ``top`` must be the exact top-k index set of the scores (ties broken
    by lower index); the output law then equals ``gumbel_max_exact``.
    """
    if top.slack is not None and top.slack != 0.0:
        raise ValueError("lazy_gumbel requires an exact (slack-free) top-k set")
    return _lazy_select(scores, top, rng, margin_offset=0.0)


def lazy_gumbel_runtime(scores, top: TopKSet, rng: np.random.Generator) -> SelectionResult:
    """Lazy sampling from a c-approximate top-k set, margin unchanged.

    Expected sample count matches the exact variant; each output
    probability is within a factor e^{+-c} of the softmax probability.
    """
    if top.slack is None:
        raise ValueError("approximate variant requires a slack value")
    return _lazy_select(scores, top, rng, margin_offset=0.0)


def lazy_gumbel_private(scores, top: TopKSet, rng: np.random.Generator) -> SelectionResult:
    """Lazy sampling from a c-approximate top-k set, margin lowered by c.

    Lowering the margin restores the exact softmax output law at the cost
    of an e^c factor in the expected number of stragglers.
    """
    if top.slack is None:
        raise ValueError("private variant requires a slack value")
    return _lazy_select(scores, top, rng, margin_offset=float(top.slack))


def lazy_gumbel_batch(
    values: Sequence[float] | np.ndarray,
    top: TopKSet,
    draws: int,
    rng: np.random.Generator,
    margin_offset: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized repetition of the lazy sampler over materialized scores.

    Runs the same algorithm as ``_lazy_select`` independently ``draws``
    times, vectorized across draws. Returns (winners, extra_counts).
    Intended for distribution-level tests where millions of repetitions
    are needed.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    members = np.asarray(sorted(top.indices), dtype=np.int64)
    k = members.size
    if k > n:
        raise ValueError("top-k set larger than the candidate count")

    xs = x[members]
    noisy_s = xs[None, :] + _gumbel_array((draws, k), rng)
    high = noisy_s.max(axis=1)
    margin = high - xs.min() - margin_offset

    with np.errstate(over="ignore"):
        tail = -np.expm1(-np.exp(-margin))
    tail = np.where(margin < -700.0, 1.0, tail)
    counts = rng.binomial(n - k, tail)

    s_arg = members[np.argmax(noisy_s, axis=1)]
    winners = s_arg.copy()

    cmax = int(counts.max())
    if cmax > 0:
        comp = np.setdiff1d(np.arange(n, dtype=np.int64), members)
        # distinct uniform subsets per draw: the C smallest random keys
        keys = rng.random((draws, comp.size))
        order = np.argsort(keys, axis=1)[:, :cmax]
        cand = comp[order]
        active = np.arange(cmax)[None, :] < counts[:, None]

        # truncated Gumbels above the per-draw margin
        v = rng.random((draws, cmax))
        w = tail[:, None] * (1.0 - v)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = -np.log(-np.log1p(-w))
        cand_noisy = x[cand] + g
        cand_noisy[~active] = -np.inf

        t_best = cand_noisy.max(axis=1)
        t_arg = cand[np.arange(draws), np.argmax(cand_noisy, axis=1)]
        beats = t_best > high
        winners = np.where(beats, t_arg, s_arg)

    return winners, counts.astype(np.int64)
