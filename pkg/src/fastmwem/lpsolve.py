"""Private LP feasibility solvers built on multiplicative weights.

Two settings: a scalar-private primal solver over the simplex (the
right-hand side b is the sensitive quantity), and a constraint-private
dense-MWU solver whose distribution over constraints is kept 1/s-dense
via Bregman projections and whose dual oracle is an exponential
mechanism over polytope vertices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mechanism import EmConfig, compose_budget, em_exact, lazy_em
from .mips import IndexConfig, build_index
from .sampling import MaterializedScores

__all__ = [
    "LPInstance",
    "DenseDistribution",
    "FeasibilityReport",
    "BinarySearchResult",
    "scalar_private_solve",
    "bregman_project",
    "bregman_sensitivity_check",
    "dual_oracle_em",
    "dense_mwu_solve",
    "feasibility_binary_search",
    "save_lp_instance",
    "load_lp_instance",
]


@dataclass(frozen=True)
class LPInstance:
    """Feasibility program data: find x with Ax <= b on a fixed slice.

    ``rho`` is the public width bound (max |A_ij| for the scalar-private
    solver; a sup-norm bound on Ax - b for the dense solver) and
    ``delta_inf`` the per-coordinate sensitivity of b.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    delta_inf: float
    rho: float
    opt: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if A.ndim != 2 or b.shape != (A.shape[0],) or c.shape != (A.shape[1],):
            raise ValueError("inconsistent LP dimensions")
        if self.rho < np.abs(A).max() - 1e-12:
            raise ValueError("rho must bound max |A_ij|")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def is_packing(self) -> bool:
        return bool(self.A.min() >= 0 and self.c.min() > 0)


@dataclass(frozen=True)
class DenseDistribution:
    """Distribution over constraints with infinity norm at most 1/s."""

    mass: np.ndarray
    s: float

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=np.float64)
        if abs(mass.sum() - 1.0) > 1e-9:
            raise ValueError("mass must sum to 1")
        if mass.max() > 1.0 / self.s + 1e-12:
            raise ValueError("mass violates the 1/s density bound")
        object.__setattr__(self, "mass", mass)


@dataclass(frozen=True)
class FeasibilityReport:
    x_out: np.ndarray
    slacks: np.ndarray  # A x_out - b, computed exactly

    def violated_count_at(self, alpha: float) -> int:
        return int(np.sum(self.slacks > alpha))

    @property
    def max_slack(self) -> float:
        return float(self.slacks.max())


def _report(lp: LPInstance, x: np.ndarray) -> FeasibilityReport:
    return FeasibilityReport(x_out=x, slacks=lp.A @ x - lp.b)


def scalar_private_solve(
    lp: LPInstance,
    alpha: float,
    epsilon: float,
    delta: float,
    rng: np.random.Generator,
    index_config: IndexConfig | None = None,
    iterations: int | None = None,
    mode: str = "exact-set",
    slack: float | None = None,
) -> tuple[FeasibilityReport, list[int]]:
    """Primal MWU over the simplex with a private worst-constraint oracle.

    Scores are A_i x - b_i = <A_i concat b_i, x concat -1>, so the index
    is built once on the concatenated rows. Returns the report for the
    averaged iterate and the per-iteration sample counts.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if lp.rho == 0:
        raise ValueError("width bound rho must be positive")
    d = lp.d
    t_count = iterations if iterations is not None else int(math.ceil(9.0 * lp.rho**2 * math.log(d) / alpha**2))
    t_count = max(t_count, 1)
    eta = math.sqrt(math.log(d) / t_count)
    budget = compose_budget(epsilon, delta, t_count, variant="lp")
    cfg = EmConfig(epsilon0=budget.epsilon0, sensitivity=lp.delta_inf)

    rows = np.hstack([lp.A, lp.b[:, None]])
    index = build_index(rows, index_config) if index_config is not None else None
    k = int(math.ceil(math.sqrt(lp.m)))

    x = np.full(d, 1.0 / d)
    x_sum = np.zeros(d)
    samples: list[int] = []
    for _ in range(t_count):
        if index is None:
            scores = lp.A @ x - lp.b
            worst = em_exact(scores, cfg, rng)
            samples.append(lp.m)
        else:
            query = np.concatenate([x, [-1.0]])
            hit = lazy_em(index, query, k, cfg, rng, mode=mode, slack=slack)
            worst = hit.original_id
            samples.append(hit.score_evaluations)
        losses = lp.A[worst] / lp.rho
        x = x * np.exp(-eta * losses)
        x = x / x.sum()
        x_sum += x
    x_bar = x_sum / t_count
    return _report(lp, x_bar), samples


def bregman_project(y: np.ndarray, s: float) -> np.ndarray:
    """KL projection of a nonnegative measure onto 1/s-dense distributions.

    Closed form (1/s) * min(1, c * y_a) with c solving
    sum_a min(1, c * y_a) = s; the breakpoint segment is located exactly
    by a descending sort.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("measure must be a nonempty vector")
    if y.min() < 0 or y.max() == 0:
        raise ValueError("measure must be nonnegative and nonzero")
    m = y.size
    if not 1 <= s <= m:
        raise ValueError("density parameter s must lie in [1, m]")
    positive = int(np.count_nonzero(y))
    if s > positive:
        raise ValueError("infeasible: fewer positive coordinates than s")

    order = np.argsort(-y, kind="stable")
    ys = y[order]
    suffix = np.concatenate([np.cumsum(ys[::-1])[::-1], [0.0]])  # suffix[j] = sum_{a >= j} ys[a]
    # with the top j entries capped at 1: c = (s - j) / suffix[j]
    for j in range(m):
        if j >= s:
            break
        rest = suffix[j]
        if rest <= 0:
            break
        cval = (s - j) / rest
        top_ok = j == 0 or cval * ys[j - 1] >= 1.0 - 1e-12
        next_ok = cval * ys[j] <= 1.0 + 1e-12
        if top_ok and next_ok:
            return np.minimum(1.0, cval * y) / s
    # all of the s mass sits on capped coordinates (s integral): uniform
    # 1/s on the s largest entries
    out = np.zeros(m)
    out[order[: int(round(s))]] = 1.0 / s
    return out


def bregman_sensitivity_check(y: np.ndarray, y_prime: np.ndarray, s: float) -> float:
    """Projection distance on the shared coordinates after a one-row extension.

    Since adding a coordinate only shrinks the breakpoint multiplier c, the
    shared coordinates move monotonically down and the distance equals the
    mass the new coordinate captures, which is at most 1/s. The full L1
    distance (both directions of movement) is exactly twice this value.
    """
    y = np.asarray(y, dtype=np.float64)
    y_prime = np.asarray(y_prime, dtype=np.float64)
    if y_prime.size != y.size + 1 or not np.array_equal(y_prime[: y.size], y):
        raise ValueError("y_prime must extend y by exactly one coordinate")
    proj = bregman_project(y, s)
    proj_prime = bregman_project(y_prime, s)
    return float(np.abs(proj - proj_prime[: y.size]).sum())


def dual_oracle_vectors(lp: LPInstance) -> np.ndarray:
    """Candidate vectors N_j = -(OPT / c_j) * A[:, j], one per vertex."""
    if not lp.is_packing():
        raise ValueError("dual oracle requires packing form (A >= 0, c > 0)")
    return -(lp.opt / lp.c)[None, :] * lp.A  # column j scaled; shape (m, d)


def dual_oracle_em(
    y: DenseDistribution,
    lp: LPInstance,
    epsilon_prime: float,
    rng: np.random.Generator,
    index=None,
    k: int | None = None,
    mode: str = "exact-set",
    slack: float | None = None,
) -> tuple[int, np.ndarray, int]:
    """Private vertex selection: maximize <y, N_j> over the d vertices.

    Sensitivity is 3 OPT / (c_min s): neighboring dense distributions move
    by at most 2/s in L1 and the new row contributes at most 1/s more.
    Returns (vertex index, vertex point, score evaluations).
    """
    if not lp.is_packing():
        raise ValueError("dual oracle requires packing form (A >= 0, c > 0)")
    sensitivity = 3.0 * lp.opt / (lp.c.min() * y.s)
    cfg = EmConfig(epsilon0=epsilon_prime, sensitivity=sensitivity)
    if index is None:
        scores = dual_oracle_vectors(lp).T @ y.mass  # (d,)
        j = em_exact(MaterializedScores(scores), cfg, rng)
        evals = lp.d
    else:
        kk = k if k is not None else int(math.ceil(math.sqrt(lp.d)))
        hit = lazy_em(index, y.mass, kk, cfg, rng, mode=mode, slack=slack)
        j = hit.original_id
        evals = hit.score_evaluations
    vertex = np.zeros(lp.d)
    vertex[j] = lp.opt / lp.c[j]
    return j, vertex, evals


def dense_mwu_solve(
    lp: LPInstance,
    alpha: float,
    epsilon: float,
    delta: float,
    s: float,
    rng: np.random.Generator,
    index_config: IndexConfig | None = None,
    iterations: int = 500,
    mode: str = "exact-set",
    slack: float | None = None,
) -> tuple[FeasibilityReport, list[int]]:
    """Constraint-private dense MWU over the m constraints.

    The distribution over constraints is updated toward violated
    constraints, projected back to the 1/s-dense set each iteration, and
    the EM dual oracle supplies a vertex with low expected violation.
    """
    if not lp.is_packing():
        raise ValueError("dense MWU requires packing form (A >= 0, c > 0)")
    if s < 1:
        raise ValueError("s must be at least 1")
    m = lp.m

    # width for loss scaling: worst |A_i v - b_i| over the slice vertices
    vertex_values = (lp.opt / lp.c)[None, :] * lp.A  # (m, d): A_i v^{(j)}
    rho = float(np.abs(vertex_values - lp.b[:, None]).max())
    if rho == 0:
        rho = 1.0

    budget = compose_budget(epsilon, delta, iterations, variant="lp")
    index = build_index(dual_oracle_vectors(lp).T, index_config) if index_config is not None else None

    eta = min(0.5, math.sqrt(math.log(m) / iterations))
    w = np.full(m, 1.0 / m)
    x_sum = np.zeros(lp.d)
    samples: list[int] = []
    for _ in range(iterations):
        y = DenseDistribution(mass=bregman_project(w, s), s=s)
        _, vertex, evals = dual_oracle_em(
            y, lp, budget.epsilon0, rng, index=index, mode=mode, slack=slack,
        )
        samples.append(evals)
        x_sum += vertex
        gains = (lp.A @ vertex - lp.b + rho) / (2.0 * rho)  # in [0, 1]
        if gains.min() < -1e-9 or gains.max() > 1.0 + 1e-9:
            raise ValueError("width bound violated: losses escape [0, 1]")
        w = w * np.exp(eta * np.clip(gains, 0.0, 1.0))
        w = w / w.sum()
    x_bar = x_sum / iterations
    return _report(lp, x_bar), samples


@dataclass(frozen=True)
class BinarySearchResult:
    opt_estimate: float
    report: FeasibilityReport | None
    probes: int
    total_epsilon: float


def feasibility_binary_search(
    make_instance,
    solve,
    feasible,
    bracket: tuple[float, float],
    tolerance: float,
    epsilon_per_probe: float,
    rng: np.random.Generator,
) -> BinarySearchResult:
    """Bisection over the objective value with a private solve per probe.

    ``make_instance(opt)`` builds the feasibility slice, ``solve`` runs a
    private solver, and ``feasible(report)`` judges the outcome. Assumes
    monotone feasibility in opt (with lo feasible, hi infeasible). Total
    privacy cost is probes * epsilon_per_probe.
    """
    lo, hi = bracket
    if not (hi > lo and tolerance > 0):
        raise ValueError("invalid bracket or tolerance")
    probes = 0
    best_report = None
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        report = solve(make_instance(mid), rng)
        probes += 1
        if feasible(report):
            lo = mid
            best_report = report
        else:
            hi = mid
    return BinarySearchResult(
        opt_estimate=lo,
        report=best_report,
        probes=probes,
        total_epsilon=probes * epsilon_per_probe,
    )


# ---------------------------------------------------------------------------
# text import/export: header "m d", then A row-major, b, c, then scalars

def save_lp_instance(lp: LPInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{lp.m} {lp.d}\n")
        for row in lp.A:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write(" ".join(repr(float(v)) for v in lp.b) + "\n")
        fh.write(" ".join(repr(float(v)) for v in lp.c) + "\n")
        fh.write(f"{float(lp.delta_inf)!r} {float(lp.rho)!r} {float(lp.opt)!r}\n")


def load_lp_instance(path) -> LPInstance:
    with open(path) as fh:
        tokens = fh.read().split()
    m, d = int(tokens[0]), int(tokens[1])
    vals = np.asarray([float(t) for t in tokens[2:]], dtype=np.float64)
    if vals.size != m * d + m + d + 3:
        raise ValueError("malformed LP instance file")
    a_vals = vals[: m * d].reshape(m, d)
    b_vals = vals[m * d : m * d + m]
    c_vals = vals[m * d + m : m * d + m + d]
    delta_inf, rho, opt = vals[-3:]
    return LPInstance(A=a_vals, b=b_vals, c=c_vals, delta_inf=float(delta_inf), rho=float(rho), opt=float(opt))
