"""Tests for instance generators, experiment runners, CSV output, and CLI."""
import numpy as np
import pytest

from fastmwem.cli import main
from fastmwem.harness import (
    CSV_COLUMNS,
    EXPERIMENTS,
    ExperimentConfig,
    RunRecord,
    emit_csv,
    gen_lp_instance,
    gen_query_instance,
    read_csv,
    run_experiment,
)


class TestGenerators:
    def test_query_instance_shapes(self):
        hist, queries = gen_query_instance(128, 500, 40, seed=0)
        assert hist.domain_size == 128
        assert hist.n_source == 500
        assert hist.mass.sum() == pytest.approx(1.0, abs=1e-9)
        assert queries.shape == (40, 128)
        assert set(np.unique(queries)) <= {0.0, 1.0}

    def test_query_support_bounded(self):
        _, queries = gen_query_instance(200, 100, 30, seed=1)
        assert queries.sum(axis=1).max() <= 200 // 4

    def test_query_determinism(self):
        a = gen_query_instance(64, 100, 10, seed=7)
        b = gen_query_instance(64, 100, 10, seed=7)
        assert np.array_equal(a[0].mass, b[0].mass)
        assert np.array_equal(a[1], b[1])

    def test_lp_instance_planted_feasible(self):
        lp = gen_lp_instance(100, 12, seed=2)
        assert lp.m == 100 and lp.d == 12
        assert lp.delta_inf == 0.1
        assert lp.rho == pytest.approx(np.abs(lp.A).max())
        # some simplex point satisfies all constraints by construction
        from scipy.optimize import linprog

        res = linprog(
            np.zeros(12), A_ub=lp.A, b_ub=lp.b,
            A_eq=np.ones((1, 12)), b_eq=[1.0], bounds=[(0, None)] * 12,
        )
        assert res.success

    def test_lp_determinism(self):
        a = gen_lp_instance(50, 5, seed=3)
        b = gen_lp_instance(50, 5, seed=3)
        assert np.array_equal(a.A, b.A)
        assert np.array_equal(a.b, b.b)


class TestConfig:
    def test_rejects_unknown_experiment(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="mystery")

    def test_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"experiment": "query-parity", "bogus": 1})

    def test_rejects_nonpositive_sizes(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="query-parity", m=0)

    def test_hash_stable_and_sensitive(self):
        a = ExperimentConfig(experiment="query-parity", seed=1)
        b = ExperimentConfig(experiment="query-parity", seed=1)
        c = ExperimentConfig(experiment="query-parity", seed=2)
        assert a.hash() == b.hash()
        assert a.hash() != c.hash()
        assert len(a.hash()) == 12

    def test_index_config_passthrough(self):
        cfg = ExperimentConfig(experiment="query-scaling", nlist=8, nprobe=2, m_neighbors=4)
        ic = cfg.index_config("ivf", seed=5)
        assert ic.flavor == "ivf" and ic.nlist == 8 and ic.nprobe == 2 and ic.seed == 5


SMALL = {
    "query-parity": dict(m=20, U=32, n=50, T=10),
    "query-error-indices": dict(m=20, U=32, n=50, T=10, flavors=("flat", "ivf")),
    "query-scaling": dict(m=200, U=16, n=50, T=5, flavors=("flat",)),
    "margin-study": dict(m=50, U=32, n=50, T=10),
    "n-ablation": dict(m=20, U=32, n=10, T=10),
    "lp-parity": dict(m=100, d=5, T=20),
    "lp-scaling": dict(m=500, d=5, T=10),
}


class TestRunners:
    @pytest.mark.parametrize("experiment", EXPERIMENTS)
    def test_small_run_produces_rows(self, experiment):
        cfg = ExperimentConfig(experiment=experiment, seed=0, **SMALL[experiment])
        rows = run_experiment(cfg)
        assert rows
        for row in rows:
            assert row.experiment == experiment
            assert row.config_hash == cfg.hash()
            assert row.error >= 0.0
            assert row.samples_drawn >= 0

    @pytest.mark.parametrize("experiment", EXPERIMENTS)
    def test_reproducible_apart_from_timing(self, experiment):
        cfg = ExperimentConfig(experiment=experiment, seed=4, **SMALL[experiment])
        timing = {"wall_nanos", "build_nanos"}
        strip = lambda rows: [
            tuple(getattr(r, c) for c in CSV_COLUMNS if c not in timing) for r in rows
        ]
        assert strip(run_experiment(cfg)) == strip(run_experiment(cfg))

    def test_parity_pairs_share_instance(self):
        cfg = ExperimentConfig(experiment="query-parity", seed=0, **SMALL["query-parity"])
        rows = run_experiment(cfg)
        flavors = {r.flavor for r in rows}
        assert flavors == {"classic", "flat"}

    def test_repetitions_vary_seed(self):
        cfg = ExperimentConfig(
            experiment="lp-parity", seed=0, repetitions=3, **SMALL["lp-parity"]
        )
        rows = run_experiment(cfg)
        assert {r.seed for r in rows} == {0, 1, 2}


class TestCsv:
    def test_header_only_when_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_csv([], path)
        assert path.read_text().strip() == ",".join(CSV_COLUMNS)

    def test_round_trip(self, tmp_path):
        rec = RunRecord(
            config_hash="abc123", seed=7, experiment="query-parity",
            m=10, U=32, n=50, d=0, flavor="flat", iteration=3, selected=2,
            error=0.125, samples_drawn=14, wall_nanos=1000, build_nanos=2000,
        )
        path = tmp_path / "rows.csv"
        emit_csv([rec], path)
        assert read_csv(path) == [rec]

    def test_quoting(self, tmp_path):
        rec = RunRecord(
            config_hash='we,"ird', seed=0, experiment="lp-parity",
            m=1, U=0, n=0, d=1, flavor="flat", iteration=0, selected=-1,
            error=0.0, samples_drawn=0, wall_nanos=0, build_nanos=0,
        )
        path = tmp_path / "quoted.csv"
        emit_csv([rec], path)
        assert read_csv(path)[0].config_hash == 'we,"ird'


class TestCli:
    def test_bad_config_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{"bogus": 1}')
        assert main(["query-parity", "--config", str(cfg)]) == 2

    def test_malformed_json_exits_2(self, tmp_path):
        cfg = tmp_path / "broken.json"
        cfg.write_text("{not json")
        assert main(["query-parity", "--config", str(cfg)]) == 2

    def test_unknown_experiment_rejected(self):
        with pytest.raises(SystemExit):
            main(["telepathy"])

    def test_small_run_writes_csv(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"m": 20, "U": 32, "n": 50, "T": 5}')
        out = tmp_path / "out.csv"
        assert main(["query-parity", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
        rows = read_csv(out)
        assert rows
        assert all(r.seed == 3 for r in rows)
