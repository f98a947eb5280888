"""Benchmark grid: problem generation, estimator runs, and CSV outputs.

A cell is one ``(num_nodes, density, seed)`` instance carrying corrupted
observations for every noise level. Every random stream is derived from the
base seed and the cell coordinates, so any cell can be rerun in isolation and
the worker count never changes a byte of output.
"""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fmsync import io
from fmsync.energy import Cost, EnergyConfig
from fmsync.estimators import (
    OptimizerConfig,
    evaluate_estimate,
    evaluate_estimate_squared,
    multi_restart,
)
from fmsync.evaluation import (
    baseline_samples,
    entry_spread,
    oracle_curve,
    summarize_experiment,
)
from fmsync.problem import AbsoluteState, corrupt, generate_graph, generate_ground_truth
from fmsync.sampler import SampleSet, SamplerConfig, posterior_mean, run_chain
from fmsync.seeding import derive_rng, float_key

ESTIMATORS = ("MLE1", "MLE2", "MC1", "MC2-euclid", "MC2-riem")
ROW_FIELDS = ["estimator", "density", "sigma2", "seed", "mean_dist", "mean_dist_sq", "oracle_acc", "mean_entry_spread"]
TRACE_FIELDS = ["estimator", "density", "sigma2", "seed", "iteration", "energy", "dist", "obs_baseline"]
ORACLE_FIELDS = ["estimator", "density", "sigma2", "seed", "num_samples", "oracle_acc", "baseline_acc"]
ORACLE_COUNTS = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000)

# stream tags keep the derived generators of different purposes apart
_GRAPH, _NOISE, _RESTART, _CHAIN, _BASELINE = range(5)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 20
    num_nodes: int = 11
    densities: tuple[float, ...] = (1.0,)
    sigmas2: tuple[float, ...] = (0.2,)
    estimators: tuple[str, ...] = ("MLE1", "MLE2")
    seeds: tuple[int, ...] = (0,)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        for name in ("densities", "sigmas2", "estimators", "seeds"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
            if not getattr(self, name):
                raise ValueError(f"{name}: must not be empty")
        object.__setattr__(self, "densities", tuple(float(d) for d in self.densities))
        object.__setattr__(self, "sigmas2", tuple(float(s) for s in self.sigmas2))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if isinstance(self.sampler, dict):
            object.__setattr__(self, "sampler", _sampler_from_dict(self.sampler))
        if isinstance(self.optimizer, dict):
            object.__setattr__(self, "optimizer", OptimizerConfig(**self.optimizer))
        if self.n < 2:
            raise ValueError("n: must be at least 2")
        if self.num_nodes < 2:
            raise ValueError("num_nodes: must be at least 2")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValueError(f"estimators: unknown {bad}; choose from {list(ESTIMATORS)}")
        if any(not 0 < d <= 1 for d in self.densities):
            raise ValueError("densities: must lie in (0, 1]")
        if any(s < 0 or not math.isfinite(s) for s in self.sigmas2):
            raise ValueError("sigmas2: must be finite and nonnegative")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds: must be nonnegative")
        if self.workers < 1:
            raise ValueError("workers: must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return io.to_jsonable(self)

    def echo(self) -> dict:
        """Config as embedded in outputs; where and how parallel a run is never changes results."""
        d = self.to_dict()
        del d["output_dir"], d["workers"]
        return d


def _sampler_from_dict(d: dict) -> SamplerConfig:
    d = dict(d)
    if isinstance(d.get("beta"), str):
        d["beta"] = float(d["beta"])
    return SamplerConfig(**d)


@dataclass(frozen=True)
class Cell:
    num_nodes: int
    density: float
    seed: int

    @property
    def keys(self) -> tuple[int, int, int]:
        return (self.num_nodes, float_key(self.density), self.seed)

    @property
    def name(self) -> str:
        return f"N{self.num_nodes}_D{float_key(self.density)}_S{self.seed}"


def cells(config: ExperimentConfig) -> list[Cell]:
    return [Cell(config.num_nodes, d, s) for d in config.densities for s in config.seeds]


def generate_cell(config: ExperimentConfig, cell: Cell) -> io.ProblemBundle:
    """Graph, Haar ground truth and one corrupted observation set per noise level."""
    rng = derive_rng(cell.seed, _GRAPH, cell.num_nodes, float_key(cell.density))
    graph = generate_graph(cell.num_nodes, cell.density, rng)
    truth, clean = generate_ground_truth(graph, config.n, rng)
    observations = {
        s: corrupt(clean, s, derive_rng(cell.seed, _NOISE, cell.num_nodes, float_key(cell.density), float_key(s)))
        for s in config.sigmas2
    }
    echo = {"n": config.n, "num_nodes": cell.num_nodes, "density": cell.density, "seed": cell.seed}
    return io.ProblemBundle(truth, clean, observations, cell.seed, cell.density, echo)


def _stream_seed(*keys: int) -> int:
    return int(derive_rng(*keys).integers(2**62))


def observation_baseline(bundle: io.ProblemBundle, sigma2: float) -> float:
    """Mean distance of the corrupted observations themselves to the truth."""
    obs = bundle.observed(sigma2)
    return float(np.mean(np.linalg.norm(obs.relative_maps - bundle.clean.relative_maps, axis=(-2, -1))))


def _chain_variant(estimator: str) -> Cost:
    return Cost.RIEMANNIAN if estimator == "MC2-riem" else Cost.EUCLIDEAN


@dataclass
class CellOutput:
    rows: list[dict] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)
    oracle: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    # (estimator, sigma2) -> point estimate plus the restart runs or the sample set
    artifacts: dict = field(default_factory=dict)


def run_cell(
    config: ExperimentConfig, cell: Cell, bundle: io.ProblemBundle | None = None, keep: bool = False
) -> CellOutput:
    """All requested estimators at every noise level of one cell.

    MC estimators start their chain at the constrained MLE; MC1 and MC2-euclid
    share the Euclidean-cost chain. The random baseline for the oracle accuracy
    is seeded with the constrained MLE as well. A failing estimator is recorded
    and the remaining ones still run. ``keep`` retains estimates and samples.
    """
    bundle = bundle or generate_cell(config, cell)
    out = CellOutput()
    truth = bundle.truth.maps
    for sigma2 in config.sigmas2:
        obs = bundle.observed(sigma2)
        sk = float_key(sigma2)
        base = observation_baseline(bundle, sigma2)
        cache: dict = {}

        def mle(name):
            if name not in cache:
                seed = _stream_seed(cell.seed, _RESTART, *cell.keys[:2], sk, ESTIMATORS.index(name))
                cache[name] = multi_restart(
                    obs, name, config.optimizer.restarts, seed, config.optimizer, bundle.clean, return_runs=True
                )
            return cache[name]

        def chain(variant: Cost) -> SampleSet:
            if variant not in cache:
                start, _ = mle("MLE2")
                sc = dataclasses.replace(
                    config.sampler,
                    variant=EnergyConfig(variant),
                    seed=_stream_seed(cell.seed, _CHAIN, *cell.keys[:2], sk, list(Cost).index(variant)),
                )
                cache[variant] = run_chain(obs, start, sc)
            return cache[variant]

        for est in config.estimators:
            tag = {"estimator": est, "density": cell.density, "sigma2": sigma2, "seed": cell.seed}
            try:
                if est.startswith("MLE"):
                    state, runs = mle(est)
                    if keep:
                        out.artifacts[(est, sigma2)] = {"state": state, "runs": runs}
                    points = np.stack([r.state.maps for r in runs])
                    for k, (e, d) in enumerate(zip(runs[0].energy_trace, runs[0].distance_trace)):
                        out.traces.append({**tag, "iteration": k, "energy": e, "dist": d, "obs_baseline": base})
                else:
                    draws = chain(_chain_variant(est))
                    state = posterior_mean(draws, "euclidean" if est == "MC1" else "frechet")
                    points = draws.samples
                    if keep:
                        out.artifacts[(est, sigma2)] = {"state": state, "samples": draws}
                    _oracle_rows(out, tag, truth, points, mle("MLE2")[0], cell, sk)
                acc = [oracle_curve(truth[i], points[:, i])[-1] for i in range(1, len(truth))]
                spread = [entry_spread(points[:, i]).mean() for i in range(1, len(truth))] if len(points) > 1 else [math.nan]
                out.rows.append(
                    {
                        **tag,
                        "mean_dist": evaluate_estimate(state, bundle.clean),
                        "mean_dist_sq": evaluate_estimate_squared(state, bundle.clean),
                        "oracle_acc": float(np.mean(acc)),
                        "mean_entry_spread": float(np.mean(spread)),
                    }
                )
            except Exception as exc:  # reported in the manifest, the sweep goes on
                out.failures.append({**tag, "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()})
    return out


def _oracle_rows(out, tag, truth, samples, mle_point: AbsoluteState, cell, sk) -> None:
    counts = [k for k in ORACLE_COUNTS if k <= samples.shape[0]]
    mc = np.mean([oracle_curve(truth[i], samples[:, i]) for i in range(1, len(truth))], axis=0)
    base = []
    for i in range(1, len(truth)):
        rng = derive_rng(cell.seed, _BASELINE, *cell.keys[:2], sk, i)
        base.append(oracle_curve(truth[i], baseline_samples(mle_point.maps[i], samples.shape[0], rng)))
    base = np.mean(base, axis=0)
    for k in counts:
        out.oracle.append({**tag, "num_samples": k, "oracle_acc": float(mc[k - 1]), "baseline_acc": float(base[k - 1])})


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, fields: list[str], rows: list[dict]) -> Path:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def table_rows(records: list[dict], config: ExperimentConfig, value: str = "mean_dist") -> tuple[list[str], list[dict]]:
    """Table-layout rows: one per (estimator, density), mean and std columns per noise level."""
    table = summarize_experiment(records, config.estimators, config.densities, config.sigmas2, value)
    fields = ["estimator", "density"] + [f"mean_{s!r}" for s in table.sigmas2] + [f"std_{s!r}" for s in table.sigmas2]
    rows = []
    for a, (e, d) in enumerate(table.rows):
        row = {"estimator": e, "density": d}
        for b, s in enumerate(table.sigmas2):
            row[f"mean_{s!r}"] = float(table.mean[a, b])
            row[f"std_{s!r}"] = float(table.std[a, b])
        rows.append(row)
    return fields, rows


def long_rows(records: list[dict], config: ExperimentConfig) -> list[dict]:
    table = summarize_experiment(records, config.estimators, config.densities, config.sigmas2)
    out = []
    for a, (e, d) in enumerate(table.rows):
        for b, s in enumerate(table.sigmas2):
            out.append(
                {
                    "estimator": e,
                    "density": d,
                    "sigma2": s,
                    "mean_dist": float(table.mean[a, b]),
                    "std_dist": float(table.std[a, b]),
                    "num_seeds": int(table.count[a, b]),
                }
            )
    return out


@dataclass
class SweepOutcome:
    rows: list[dict]
    traces: list[dict]
    oracle: list[dict]
    failures: list[dict]
    files: dict[str, Path]

    @property
    def ok(self) -> bool:
        return not self.failures


def _cell_job(args):
    config, cell = args
    return run_cell(config, cell)


def run_sweep(config: ExperimentConfig, output_dir=None) -> SweepOutcome:
    """Run the whole grid and write the merged outputs.

    Files: ``rows.csv`` (one row per estimator, density, noise level and seed),
    ``table.csv`` and ``table_sq.csv`` (estimator x density by noise level),
    ``long.csv``, ``convergence.csv``, ``oracle.csv``, ``config.json`` and
    ``manifest.json``.
    """
    out_dir = Path(output_dir or config.output_dir)
    grid = cells(config)
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_cell_job, [(config, c) for c in grid]))
    else:
        parts = [run_cell(config, c) for c in grid]
    rows = [r for p in parts for r in p.rows]
    traces = [r for p in parts for r in p.traces]
    oracle = [r for p in parts for r in p.oracle]
    failures = [r for p in parts for r in p.failures]
    files = {
        "rows": write_csv(out_dir / "rows.csv", ROW_FIELDS, rows),
        "convergence": write_csv(out_dir / "convergence.csv", TRACE_FIELDS, traces),
        "oracle": write_csv(out_dir / "oracle.csv", ORACLE_FIELDS, oracle),
        "long": write_csv(
            out_dir / "long.csv",
            ["estimator", "density", "sigma2", "mean_dist", "std_dist", "num_seeds"],
            long_rows(rows, config),
        ),
    }
    files["table"] = write_csv(out_dir / "table.csv", *table_rows(rows, config))
    files["table_sq"] = write_csv(out_dir / "table_sq.csv", *table_rows(rows, config, "mean_dist_sq"))
    files["config"] = io.save_json(out_dir / "config.json", {"format": io.FORMAT_VERSION, "config": config.echo()})
    manifest = {
        "format": io.FORMAT_VERSION,
        "config": config.echo(),
        "cells": [c.name for c in grid],
        "failures": [{k: v for k, v in f.items() if k != "traceback"} for f in failures],
        "status": "ok" if not failures else "partial",
    }
    files["manifest"] = io.save_json(out_dir / "manifest.json", manifest)
    return SweepOutcome(rows, traces, oracle, failures, files)
