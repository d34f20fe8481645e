"""Instance generators, experiment runners, and CSV persistence.

Every experiment is a pure function of (config, seed): re-running yields
identical rows apart from the wall-time columns. Desk-scale defaults keep
runs in the minutes range; ``paper_scale`` switches to the original
problem sizes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .lpsolve import LPInstance, scalar_private_solve
from .mips import IndexConfig
from .mwem import Histogram, MwemParams, build_histogram, fast_mwem, mwem_classic

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "CSV_COLUMNS",
    "gen_query_instance",
    "gen_lp_instance",
    "run_experiment",
    "run_query_parity",
    "run_query_error_indices",
    "run_query_scaling",
    "run_margin_study",
    "run_n_ablation",
    "run_lp_parity",
    "run_lp_scaling",
    "emit_csv",
    "read_csv",
]

EXPERIMENTS = (
    "query-parity",
    "query-error-indices",
    "query-scaling",
    "margin-study",
    "n-ablation",
    "lp-parity",
    "lp-scaling",
)

CSV_COLUMNS = [
    "config_hash", "seed", "experiment", "m", "U", "n", "d", "flavor",
    "iteration", "selected", "error", "samples_drawn", "wall_nanos", "build_nanos",
]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    m: int | None = None
    U: int | None = None
    n: int | None = None
    d: int | None = None
    T: int | None = None
    epsilon: float = 1.0
    delta: float = 1e-3
    alpha: float = 0.5
    flavors: tuple[str, ...] = ("flat",)
    nlist: int | None = None
    nprobe: int | None = None
    m_neighbors: int = 32
    ef_construction: int = 100
    ef_search: int = 64
    repetitions: int = 1
    paper_scale: bool = False
    mode: str = "exact-set"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        for name in ("m", "U", "n", "d", "T"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        object.__setattr__(self, "flavors", tuple(self.flavors))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def index_config(self, flavor: str, seed: int) -> IndexConfig:
        return IndexConfig(
            flavor=flavor,
            nlist=self.nlist,
            nprobe=self.nprobe,
            m_neighbors=self.m_neighbors,
            ef_construction=self.ef_construction,
            ef_search=self.ef_search,
            seed=seed,
        )


@dataclass(frozen=True)
class RunRecord:
    config_hash: str
    seed: int
    experiment: str
    m: int
    U: int
    n: int
    d: int
    flavor: str
    iteration: int
    selected: int
    error: float
    samples_drawn: int
    wall_nanos: int
    build_nanos: int


def gen_query_instance(U: int, n: int, m: int, seed: int) -> tuple[Histogram, np.ndarray]:
    """Gaussian-bump data histogram plus m binary range-like queries."""
    if U < 2:
        raise ValueError("domain size must be at least 2")
    rng = np.random.default_rng(seed)
    data = np.rint(rng.normal(U / 3.0, U / 15.0, size=n))
    data = np.clip(data, 0, U - 1).astype(np.int64)
    hist = build_histogram(data, U)
    queries = np.zeros((m, U))
    width = U // 4
    for i in range(m):
        pos = np.rint(rng.normal(U / 2.0, U / 5.0, size=width))
        pos = np.clip(pos, 0, U - 1).astype(np.int64)
        queries[i, np.unique(pos)] = 1.0
    return hist, queries


def gen_lp_instance(m: int, d: int, seed: int) -> LPInstance:
    """Gaussian constraint matrix with a planted feasible simplex point."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, d))
    x_star = rng.dirichlet(np.ones(d))
    b = A @ x_star + np.abs(rng.normal(0.0, 0.1, size=m))
    return LPInstance(A=A, b=b, c=np.ones(d), delta_inf=0.1, rho=float(np.abs(A).max()))


def _mwem_rows(cfg: ExperimentConfig, result, *, seed, m, U, n, flavor, thin=1) -> list[RunRecord]:
    rows = []
    for rec in result.trace.records:
        if rec.iteration % thin:
            continue
        rows.append(RunRecord(
            config_hash=cfg.hash(), seed=seed, experiment=cfg.experiment,
            m=m, U=U, n=n, d=0, flavor=flavor,
            iteration=rec.iteration, selected=rec.selected, error=rec.max_error,
            samples_drawn=rec.samples_drawn, wall_nanos=rec.wall_nanos,
            build_nanos=result.trace.index_build_nanos,
        ))
    return rows


def run_query_parity(cfg: ExperimentConfig) -> list[RunRecord]:
    """Paired classic/fast(flat) error traces across the m grid."""
    m_grid = [cfg.m] if cfg.m else [200, 500, 1000]
    U = cfg.U or (3000 if cfg.paper_scale else 512)
    n = cfg.n or 500
    t_count = cfg.T or (20000 if cfg.paper_scale else 2000)
    rows: list[RunRecord] = []
    for m in m_grid:
        for rep in range(cfg.repetitions):
            seed = cfg.seed + rep
            hist, queries = gen_query_instance(U, n, m, seed)
            params = MwemParams.derive(
                alpha=cfg.alpha, epsilon=cfg.epsilon, delta=cfg.delta,
                m=m, domain_size=U, iterations=t_count,
            )
            classic = mwem_classic(queries, hist, params, np.random.default_rng(seed + 1))
            fast = fast_mwem(
                queries, hist, params, cfg.index_config("flat", seed),
                np.random.default_rng(seed + 1), mode=cfg.mode,
            )
            rows += _mwem_rows(cfg, classic, seed=seed, m=m, U=U, n=n, flavor="classic")
            rows += _mwem_rows(cfg, fast, seed=seed, m=m, U=U, n=n, flavor="flat")
    return rows


def run_query_error_indices(cfg: ExperimentConfig) -> list[RunRecord]:
    """Fast-MWEM error over iterations for each configured index flavor."""
    m = cfg.m or 500
    U = cfg.U or (3000 if cfg.paper_scale else 512)
    n = cfg.n or 500
    t_count = cfg.T or (20000 if cfg.paper_scale else 1000)
    rows: list[RunRecord] = []
    for rep in range(cfg.repetitions):
        seed = cfg.seed + rep
        hist, queries = gen_query_instance(U, n, m, seed)
        params = MwemParams.derive(
            alpha=cfg.alpha, epsilon=cfg.epsilon, delta=cfg.delta,
            m=m, domain_size=U, iterations=t_count,
        )
        for flavor in cfg.flavors:
            mode = cfg.mode if flavor != "flat" else "exact-set"
            result = fast_mwem(
                queries, hist, params, cfg.index_config(flavor, seed),
                np.random.default_rng(seed + 1), mode=mode,
            )
            rows += _mwem_rows(cfg, result, seed=seed, m=m, U=U, n=n, flavor=flavor)
    return rows


def run_query_scaling(cfg: ExperimentConfig) -> list[RunRecord]:
    """Per-iteration selection cost while ablating m across flavors."""
    if cfg.m:
        m_grid = [cfg.m]
    elif cfg.paper_scale:
        m_grid = [10_000, 32_000, 100_000]
    else:
        m_grid = [10_000, 100_000]
    U = cfg.U or 64
    n = cfg.n or 500
    t_count = cfg.T or 20
    rows: list[RunRecord] = []
    for m in m_grid:
        hist, queries = gen_query_instance(U, n, m, cfg.seed)
        params = MwemParams.derive(
            alpha=cfg.alpha, epsilon=cfg.epsilon, delta=cfg.delta,
            m=m, domain_size=U, iterations=t_count,
        )
        for flavor in cfg.flavors:
            mode = cfg.mode if flavor != "flat" else "exact-set"
            result = fast_mwem(
                queries, hist, params, cfg.index_config(flavor, cfg.seed),
                np.random.default_rng(cfg.seed + 1), mode=mode,
            )
            rows += _mwem_rows(cfg, result, seed=cfg.seed, m=m, U=U, n=n, flavor=flavor)
    return rows


def run_margin_study(cfg: ExperimentConfig) -> list[RunRecord]:
    """Extra-sample counts per iteration across the m grid (flat index)."""
    m_grid = [cfg.m] if cfg.m else [500, 2000, 20000]
    U = cfg.U or (3000 if cfg.paper_scale else 256)
    n = cfg.n or 500
    t_count = cfg.T or 500
    rows: list[RunRecord] = []
    for m in m_grid:
        hist, queries = gen_query_instance(U, n, m, cfg.seed)
        params = MwemParams.derive(
            alpha=cfg.alpha, epsilon=cfg.epsilon, delta=cfg.delta,
            m=m, domain_size=U, iterations=t_count,
        )
        result = fast_mwem(
            queries, hist, params, cfg.index_config("flat", cfg.seed),
            np.random.default_rng(cfg.seed + 1),
        )
        rows += _mwem_rows(cfg, result, seed=cfg.seed, m=m, U=U, n=n, flavor="flat")
    return rows


def run_n_ablation(cfg: ExperimentConfig) -> list[RunRecord]:
    """Final error of paired classic/fast runs while sweeping n (T = n^2)."""
    m = cfg.m or 100
    U = cfg.U or 256
    n_grid = [cfg.n] if cfg.n else [10, 20, 40]
    rows: list[RunRecord] = []
    for n in n_grid:
        t_count = cfg.T or n * n
        for rep in range(cfg.repetitions):
            seed = cfg.seed + rep
            hist, queries = gen_query_instance(U, n, m, seed)
            params = MwemParams.derive(
                alpha=cfg.alpha, epsilon=cfg.epsilon, delta=cfg.delta,
                m=m, domain_size=U, iterations=t_count,
            )
            classic = mwem_classic(queries, hist, params, np.random.default_rng(seed + 1))
            fast = fast_mwem(
                queries, hist, params, cfg.index_config("flat", seed),
                np.random.default_rng(seed + 1),
            )
            for flavor, result in (("classic", classic), ("flat", fast)):
                rows.append(RunRecord(
                    config_hash=cfg.hash(), seed=seed, experiment=cfg.experiment,
                    m=m, U=U, n=n, d=0, flavor=flavor,
                    iteration=t_count, selected=-1, error=result.final_error,
                    samples_drawn=int(result.trace.samples.mean()),
                    wall_nanos=0, build_nanos=result.trace.index_build_nanos,
                ))
    return rows


def _lp_rows(cfg: ExperimentConfig, *, seed, m, d, flavor, report, samples, alpha,
             solve_nanos, build_nanos=0) -> list[RunRecord]:
    fraction = report.violated_count_at(alpha) / m
    return [RunRecord(
        config_hash=cfg.hash(), seed=seed, experiment=cfg.experiment,
        m=m, U=0, n=0, d=d, flavor=flavor,
        iteration=len(samples), selected=-1, error=fraction,
        samples_drawn=int(np.mean(samples)), wall_nanos=solve_nanos,
        build_nanos=build_nanos,
    )]


def run_lp_parity(cfg: ExperimentConfig) -> list[RunRecord]:
    """Violated-constraint fraction: exhaustive EM vs indexed solver."""
    m = cfg.m or 2000
    d = cfg.d or 20
    t_count = cfg.T or (5000 if cfg.paper_scale else 1000)
    rows: list[RunRecord] = []
    for rep in range(cfg.repetitions):
        seed = cfg.seed + rep
        lp = gen_lp_instance(m, d, seed)
        report_ex, samples_ex = scalar_private_solve(
            lp, cfg.alpha, cfg.epsilon, cfg.delta,
            np.random.default_rng(seed + 1), iterations=t_count,
        )
        rows += _lp_rows(cfg, seed=seed, m=m, d=d, flavor="exhaustive",
                         report=report_ex, samples=samples_ex, alpha=cfg.alpha, solve_nanos=0)
        for flavor in cfg.flavors:
            mode = cfg.mode if flavor != "flat" else "exact-set"
            start = time.monotonic_ns()
            report, samples = scalar_private_solve(
                lp, cfg.alpha, cfg.epsilon, cfg.delta,
                np.random.default_rng(seed + 1),
                index_config=cfg.index_config(flavor, seed),
                iterations=t_count, mode=mode,
            )
            elapsed = time.monotonic_ns() - start
            rows += _lp_rows(cfg, seed=seed, m=m, d=d, flavor=flavor,
                             report=report, samples=samples, alpha=cfg.alpha,
                             solve_nanos=elapsed)
    return rows


def run_lp_scaling(cfg: ExperimentConfig) -> list[RunRecord]:
    """Solve wall time while ablating the constraint count."""
    if cfg.m:
        m_grid = [cfg.m]
    elif cfg.paper_scale:
        m_grid = [300_000, 700_000, 1_500_000]
    else:
        m_grid = [5_000, 20_000, 50_000]
    d = cfg.d or 20
    t_count = cfg.T or 100
    rows: list[RunRecord] = []
    for m in m_grid:
        lp = gen_lp_instance(m, d, cfg.seed)
        for flavor in cfg.flavors:
            mode = cfg.mode if flavor != "flat" else "exact-set"
            start = time.monotonic_ns()
            report, samples = scalar_private_solve(
                lp, cfg.alpha, cfg.epsilon, cfg.delta,
                np.random.default_rng(cfg.seed + 1),
                index_config=cfg.index_config(flavor, cfg.seed),
                iterations=t_count, mode=mode,
            )
            elapsed = time.monotonic_ns() - start
            rows += _lp_rows(cfg, seed=cfg.seed, m=m, d=d, flavor=flavor,
                             report=report, samples=samples, alpha=cfg.alpha,
                             solve_nanos=elapsed)
    return rows


_RUNNERS = {
    "query-parity": run_query_parity,
    "query-error-indices": run_query_error_indices,
    "query-scaling": run_query_scaling,
    "margin-study": run_margin_study,
    "n-ablation": run_n_ablation,
    "lp-parity": run_lp_parity,
    "lp-scaling": run_lp_scaling,
}


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    return _RUNNERS[cfg.experiment](cfg)


def emit_csv(records: list[RunRecord], path) -> None:
    """Stable-schema CSV with RFC-4180 quoting; header always present."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([getattr(rec, col) for col in CSV_COLUMNS])


def read_csv(path) -> list[RunRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(RunRecord(
                config_hash=row["config_hash"], seed=int(row["seed"]),
                experiment=row["experiment"], m=int(row["m"]), U=int(row["U"]),
                n=int(row["n"]), d=int(row["d"]), flavor=row["flavor"],
                iteration=int(row["iteration"]), selected=int(row["selected"]),
                error=float(row["error"]), samples_drawn=int(row["samples_drawn"]),
                wall_nanos=int(row["wall_nanos"]), build_nanos=int(row["build_nanos"]),
            ))
    return out
