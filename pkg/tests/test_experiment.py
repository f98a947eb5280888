import csv
import dataclasses
import json

import numpy as np
import pytest

from fmsync import experiment, io
from fmsync.experiment import (
    ESTIMATORS,
    ROW_FIELDS,
    Cell,
    ExperimentConfig,
    cells,
    generate_cell,
    observation_baseline,
    run_cell,
    run_sweep,
    write_csv,
)
from fmsync.estimators import OptimizerConfig
from fmsync.sampler import SamplerConfig


def small(**kw):
    base = dict(
        n=3,
        num_nodes=4,
        densities=(1.0, 0.667),
        sigmas2=(0.0, 0.3),
        estimators=ESTIMATORS,
        seeds=(0, 1),
        sampler=SamplerConfig(num_samples=5, burn_in=3, step_size=1e-2),
        optimizer=OptimizerConfig(restarts=2, max_iters=60),
    )
    base.update(kw)
    return ExperimentConfig(**base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    @pytest.mark.parametrize(
        "kw, field",
        [
            ({"estimators": ()}, "estimators"),
            ({"densities": []}, "densities"),
            ({"sigmas2": ()}, "sigmas2"),
            ({"seeds": ()}, "seeds"),
            ({"n": 1}, "n"),
            ({"num_nodes": 1}, "num_nodes"),
            ({"estimators": ("MLE3",)}, "estimators"),
            ({"densities": (1.5,)}, "densities"),
            ({"sigmas2": (-0.1,)}, "sigmas2"),
            ({"workers": 0}, "workers"),
        ],
    )
    def test_validation_names_the_field(self, kw, field):
        with pytest.raises(ValueError, match=field):
            ExperimentConfig(**kw)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="bogus"):
            ExperimentConfig.from_dict({"bogus": 1})

    def test_scalars_are_promoted(self):
        c = ExperimentConfig(densities=1, sigmas2=0.2, estimators="MLE2", seeds=3)
        assert c.densities == (1.0,) and c.estimators == ("MLE2",) and c.seeds == (3,)

    def test_dict_round_trip(self):
        c = small()
        back = ExperimentConfig.from_dict(json.loads(io.dumps(c.to_dict())))
        assert back == c

    def test_echo_drops_run_location(self):
        e = small(output_dir="x", workers=3).echo()
        assert "output_dir" not in e and "workers" not in e
        assert e == small(output_dir="y").echo()

    def test_empty_estimators_fail_before_any_work(self, tmp_path, monkeypatch):
        calls = []
        monkeypatch.setattr(experiment, "run_cell", lambda *a, **k: calls.append(a))
        with pytest.raises(ValueError):
            run_sweep(dataclasses.replace(small(), estimators=()), tmp_path)
        assert not calls and not any(tmp_path.iterdir())


class TestCells:
    def test_grid(self):
        assert len(cells(small())) == 4

    def test_names_encode_the_cell(self):
        assert Cell(4, 0.667, 3).name == "N4_D667000_S3"

    def test_complete_graph_for_four_nodes(self):
        b = generate_cell(small(), Cell(4, 1.0, 0))
        assert b.clean.graph.num_edges == 6

    def test_noise_streams_are_per_level(self):
        # adding a noise level leaves the others untouched
        a = generate_cell(small(sigmas2=(0.3,)), Cell(4, 1.0, 0))
        b = generate_cell(small(sigmas2=(0.1, 0.3)), Cell(4, 1.0, 0))
        assert np.array_equal(a.observed(0.3).relative_maps, b.observed(0.3).relative_maps)
        assert a.truth == b.truth

    def test_observation_baseline_zero_without_noise(self):
        b = generate_cell(small(), Cell(4, 1.0, 0))
        assert observation_baseline(b, 0.0) == 0.0
        assert observation_baseline(b, 0.3) > 0


@pytest.fixture(scope="module")
def out():
    return run_cell(small(densities=(1.0,)), Cell(4, 1.0, 0), keep=True)


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep")
    return root, run_sweep(small(), root / "a")


class TestRunCell:
    def test_one_row_per_estimator_and_noise(self, out):
        assert len(out.rows) == len(ESTIMATORS) * 2
        assert not out.failures
        assert all(set(r) == set(ROW_FIELDS) for r in out.rows)

    def test_noiseless_mle_recovers(self, out):
        for r in out.rows:
            if r["sigma2"] == 0.0 and r["estimator"] == "MLE2":
                assert r["mean_dist"] < 1e-4

    def test_traces_start_at_iteration_zero(self, out):
        its = [t["iteration"] for t in out.traces if t["estimator"] == "MLE1" and t["sigma2"] == 0.3]
        assert its == list(range(len(its)))

    def test_oracle_rows_bounded_and_monotone(self, out):
        rows = [r for r in out.oracle if r["estimator"] == "MC2-riem" and r["sigma2"] == 0.3]
        acc = [r["oracle_acc"] for r in rows]
        assert [r["num_samples"] for r in rows] == [1, 2, 5]
        assert all(0 < a <= 1 for a in acc) and acc == sorted(acc)

    def test_artifacts(self, out):
        assert len(out.artifacts[("MLE2", 0.3)]["runs"]) == 2
        assert len(out.artifacts[("MC1", 0.3)]["samples"]) == 5

    def test_failures_are_isolated(self, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("chain exploded")

        monkeypatch.setattr(experiment, "run_chain", boom)
        out = run_cell(small(sigmas2=(0.3,)), Cell(4, 1.0, 0))
        assert {r["estimator"] for r in out.rows} == {"MLE1", "MLE2"}
        assert {f["estimator"] for f in out.failures} == {"MC1", "MC2-euclid", "MC2-riem"}
        assert "chain exploded" in out.failures[0]["error"]


class TestSweep:
    def test_files(self, sweep):
        root, outcome = sweep
        names = {p.name for p in (root / "a").iterdir()}
        assert names == {
            "rows.csv", "table.csv", "table_sq.csv", "long.csv",
            "convergence.csv", "oracle.csv", "config.json", "manifest.json",
        }
        assert outcome.ok

    def test_table_shape(self, sweep):
        rows = read_csv(sweep[0] / "a" / "table.csv")
        assert len(rows) == len(ESTIMATORS) * 2
        assert list(rows[0]) == ["estimator", "density", "mean_0.0", "mean_0.3", "std_0.0", "std_0.3"]

    def test_long_counts_seeds(self, sweep):
        rows = read_csv(sweep[0] / "a" / "long.csv")
        assert {r["num_seeds"] for r in rows} == {"2"}

    def test_manifest(self, sweep):
        m = io.load_json(sweep[0] / "a" / "manifest.json")
        assert m["status"] == "ok" and m["format"] == io.FORMAT_VERSION
        assert m["config"] == small().echo()

    def test_rerun_is_byte_identical(self, sweep):
        root, _ = sweep
        run_sweep(small(), root / "b")
        for p in (root / "a").iterdir():
            assert p.read_bytes() == (root / "b" / p.name).read_bytes(), p.name

    def test_workers_do_not_change_output(self, sweep):
        root, _ = sweep
        run_sweep(small(workers=2), root / "c")
        for p in (root / "a").iterdir():
            assert p.read_bytes() == (root / "c" / p.name).read_bytes(), p.name

    def test_partial_failure_manifest(self, tmp_path, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("nope")

        monkeypatch.setattr(experiment, "run_chain", boom)
        outcome = run_sweep(small(seeds=(0,), densities=(1.0,)), tmp_path)
        m = io.load_json(tmp_path / "manifest.json")
        assert not outcome.ok and m["status"] == "partial"
        assert len(m["failures"]) == 3 * 2
        assert "traceback" not in m["failures"][0]
        table = read_csv(tmp_path / "table.csv")
        assert {r["estimator"] for r in table if r["mean_0.3"] == "nan"} == {"MC1", "MC2-euclid", "MC2-riem"}


def test_write_csv_uses_repr(tmp_path):
    path = write_csv(tmp_path / "x.csv", ["a", "b"], [{"a": 0.1 + 0.2, "b": "s"}])
    assert path.read_text() == "a,b\n0.30000000000000004,s\n"
