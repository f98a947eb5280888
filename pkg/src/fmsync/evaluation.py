"""Uncertainty-quantification metrics and experiment summaries.

Standard deviations use the unbiased (N - 1) convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fmsync.manifold import haar_sample


def oracle_best_map(truth: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Per-entry closest sample value to ``truth``; generally not a rotation.

    ``samples`` has shape ``(num_samples, n, n)``. Ties go to the earliest sample.
    """
    truth = np.asarray(truth, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[0] == 0 or samples.shape[1:] != truth.shape:
        raise ValueError("samples must be a nonempty stack of matrices shaped like truth")
    idx = np.argmin(np.abs(samples - truth), axis=0)
    return np.take_along_axis(samples, idx[None], axis=0)[0]


def oracle_curve(truth: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """Accuracy of the oracle map built from the first ``k`` samples, for k = 1..len(samples).

    Uses a running per-entry minimum, so the curve is nondecreasing by construction.
    """
    truth = np.asarray(truth, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[0] == 0 or samples.shape[1:] != truth.shape:
        raise ValueError("samples must be a nonempty stack of matrices shaped like truth")
    err = np.minimum.accumulate(np.abs(samples - truth), axis=0)
    return 1.0 / (1.0 + np.sqrt(np.sum(err**2, axis=(-2, -1))))


def accuracy_score(truth: np.ndarray, best: np.ndarray) -> float:
    """``1 / (1 + ||truth - best||_F)``."""
    truth, best = np.asarray(truth, dtype=float), np.asarray(best, dtype=float)
    if truth.shape != best.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {best.shape}")
    return float(1.0 / (1.0 + np.linalg.norm(truth - best)))


def baseline_samples(mle_point: np.ndarray, num_samples: int, rng: np.random.Generator) -> np.ndarray:
    """``[mle_point, haar_1, ..., haar_{num_samples-1}]`` as one stack."""
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    mle_point = np.asarray(mle_point, dtype=float)
    rest = haar_sample(mle_point.shape[-1], rng, num_samples - 1)
    return np.concatenate([mle_point[None], rest])


def random_baseline(
    truth: np.ndarray, mle_point: np.ndarray, num_samples: int, rng: np.random.Generator
) -> float:
    """Oracle accuracy of the MLE point padded with Haar-uniform draws."""
    return accuracy_score(truth, oracle_best_map(truth, baseline_samples(mle_point, num_samples, rng)))


def entry_spread(samples: np.ndarray) -> np.ndarray:
    """Entrywise unbiased standard deviation across ``samples`` (shape ``(num_samples, n, n)``)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[0] < 2:
        raise ValueError("entry spread needs at least 2 samples")
    # shifting by one sample keeps identical samples at exactly zero spread
    return (samples - samples[0]).std(axis=0, ddof=1)


@dataclass(frozen=True)
class NodeReport:
    oracle_accuracy: float
    entry_stddev: np.ndarray
    mean_map: np.ndarray


@dataclass(frozen=True)
class UQReport:
    per_node: tuple[NodeReport, ...]
    num_samples_used: int

    @property
    def mean_oracle_accuracy(self) -> float:
        return float(np.mean([r.oracle_accuracy for r in self.per_node]))

    @property
    def mean_entry_spread(self) -> float:
        return float(np.mean([r.entry_stddev.mean() for r in self.per_node]))


def uq_report(samples: np.ndarray, truth: np.ndarray, mean_maps: np.ndarray) -> UQReport:
    """Per non-anchor node: oracle accuracy, entry spread and the supplied mean map.

    ``samples`` has shape ``(num_samples, num_nodes, n, n)``; ``truth`` and
    ``mean_maps`` have shape ``(num_nodes, n, n)``.
    """
    samples = np.asarray(samples, dtype=float)
    nodes = []
    for i in range(1, samples.shape[1]):
        best = oracle_best_map(truth[i], samples[:, i])
        nodes.append(NodeReport(accuracy_score(truth[i], best), entry_spread(samples[:, i]), mean_maps[i]))
    return UQReport(tuple(nodes), samples.shape[0])


@dataclass(frozen=True)
class SummaryTable:
    """Cell means and standard deviations over seeds, keyed by ``(estimator, density)`` rows."""

    sigmas2: tuple[float, ...]
    rows: tuple[tuple[str, float], ...]
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    missing: tuple[tuple[str, float, float], ...]

    def cell(self, estimator: str, density: float, sigma2: float) -> float:
        r = self.rows.index((estimator, density))
        return float(self.mean[r, self.sigmas2.index(sigma2)])


def summarize_experiment(
    records,
    estimators=None,
    densities=None,
    sigmas2=None,
    value: str = "mean_dist",
) -> SummaryTable:
    """Aggregate per-seed records into the estimator x density by sigma2 layout.

    ``records`` is an iterable of mappings with keys ``estimator``, ``density``,
    ``sigma2`` and ``value``. Grid axes default to the values present; cells of
    the requested grid without records are listed in ``missing`` and hold NaN.
    """
    records = list(records)
    estimators = list(estimators or dict.fromkeys(r["estimator"] for r in records))
    densities = list(densities or sorted({float(r["density"]) for r in records}, reverse=True))
    sigmas2 = tuple(sigmas2 or sorted({float(r["sigma2"]) for r in records}))
    rows = tuple((e, float(d)) for e in estimators for d in densities)
    groups: dict[tuple, list[float]] = {}
    for r in records:
        key = (r["estimator"], float(r["density"]), float(r["sigma2"]))
        groups.setdefault(key, []).append(float(r[value]))
    mean = np.full((len(rows), len(sigmas2)), np.nan)
    std = np.full_like(mean, np.nan)
    count = np.zeros(mean.shape, dtype=int)
    missing = []
    for a, (e, d) in enumerate(rows):
        for b, s in enumerate(sigmas2):
            vals = groups.get((e, d, float(s)))
            if not vals:
                missing.append((e, d, float(s)))
                continue
            mean[a, b] = np.mean(vals)
            std[a, b] = np.std(vals, ddof=1) if len(vals) > 1 else 0.0
            count[a, b] = len(vals)
    return SummaryTable(tuple(float(s) for s in sigmas2), rows, mean, std, count, tuple(missing))
