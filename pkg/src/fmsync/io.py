"""JSON and binary persistence.

Files use 1-indexed node numbers (node 1 is the anchor); everything in memory
is 0-indexed. Matrices are stored row-major as flat lists of ``n * n`` floats.
JSON is written with sorted keys and shortest round-trip float repr, so equal
inputs give byte-identical files and loading restores every bit.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fmsync.estimators import EstimateResult
from fmsync.problem import AbsoluteState, ObservationSet, SyncGraph
from fmsync.sampler import SampleSet, SamplerConfig

FORMAT_VERSION = "fmsync-1"


def _flat(maps: np.ndarray) -> list[list[float]]:
    maps = np.asarray(maps, dtype=float)
    return [[float(x) for x in m.ravel()] for m in maps]


def _unflat(rows, n: int) -> np.ndarray:
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != n * n:
        raise ValueError(f"expected rows of {n * n} numbers")
    return arr.reshape(-1, n, n)


def to_jsonable(obj):
    """Plain JSON types for dataclasses, enums, arrays and non-finite floats."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable and reversible
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())


def graph_to_dict(graph: SyncGraph) -> dict:
    return {"num_nodes": graph.num_nodes, "edges": [[i + 1, j + 1] for i, j in graph.edges]}


def graph_from_dict(d: dict) -> SyncGraph:
    return SyncGraph(int(d["num_nodes"]), tuple((int(i) - 1, int(j) - 1) for i, j in d["edges"]))


def problem_to_dict(obs: ObservationSet, seed: int) -> dict:
    """The single-problem schema: n, num_nodes, edges, relative_maps, sigma2, seed."""
    return {
        "n": obs.n,
        **graph_to_dict(obs.graph),
        "relative_maps": _flat(obs.relative_maps),
        "sigma2": obs.sigma2,
        "seed": int(seed),
    }


def problem_from_dict(d: dict) -> tuple[ObservationSet, int]:
    obs = ObservationSet(graph_from_dict(d), _unflat(d["relative_maps"], int(d["n"])), float(d["sigma2"]))
    return obs, int(d["seed"])


@dataclass(frozen=True)
class ProblemBundle:
    """One generated cell: graph, hidden ground truth and a corrupted copy per noise level."""

    truth: AbsoluteState
    clean: ObservationSet
    observations: dict[float, ObservationSet]
    seed: int
    density: float
    config: dict

    def observed(self, sigma2: float) -> ObservationSet:
        try:
            return self.observations[float(sigma2)]
        except KeyError:
            raise ValueError(f"bundle has no observations at sigma2={sigma2}") from None


def bundle_to_dict(bundle: ProblemBundle) -> dict:
    return {
        "format": FORMAT_VERSION,
        "config": bundle.config,
        "n": bundle.clean.n,
        "density": bundle.density,
        "seed": bundle.seed,
        **graph_to_dict(bundle.clean.graph),
        "ground_truth": {
            "absolute_maps": _flat(bundle.truth.maps),
            "relative_maps": _flat(bundle.clean.relative_maps),
        },
        "observations": [
            {"sigma2": s, "relative_maps": _flat(o.relative_maps)}
            for s, o in sorted(bundle.observations.items())
        ],
    }


def bundle_from_dict(d: dict) -> ProblemBundle:
    _check_format(d)
    n = int(d["n"])
    graph = graph_from_dict(d)
    truth = AbsoluteState(_unflat(d["ground_truth"]["absolute_maps"], n))
    clean = ObservationSet(graph, _unflat(d["ground_truth"]["relative_maps"], n), 0.0)
    obs = {
        float(o["sigma2"]): ObservationSet(graph, _unflat(o["relative_maps"], n), float(o["sigma2"]))
        for o in d["observations"]
    }
    return ProblemBundle(truth, clean, obs, int(d["seed"]), float(d["density"]), d.get("config", {}))


def save_bundle(path, bundle: ProblemBundle) -> Path:
    return save_json(path, bundle_to_dict(bundle))


def load_bundle(path) -> ProblemBundle:
    return bundle_from_dict(load_json(path))


def _check_format(d: dict) -> None:
    if d.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported format {d.get('format')!r}; expected {FORMAT_VERSION!r}")


def result_to_dict(result: EstimateResult, config=None) -> dict:
    return {
        "format": FORMAT_VERSION,
        "config": config,
        "constrained": result.constrained,
        "converged": result.converged,
        "iterations": result.iterations,
        "final_energy": result.final_energy,
        "energy_trace": list(result.energy_trace),
        "distance_trace": list(result.distance_trace),
        "n": result.maps.shape[-1],
        "maps": _flat(result.maps),
    }


def result_from_dict(d: dict) -> EstimateResult:
    _check_format(d)
    return EstimateResult(
        maps=_unflat(d["maps"], int(d["n"])),
        final_energy=float(d["final_energy"]),
        iterations=int(d["iterations"]),
        converged=bool(d["converged"]),
        constrained=bool(d["constrained"]),
        energy_trace=[float(x) for x in d["energy_trace"]],
        distance_trace=[float(x) for x in d["distance_trace"]],
    )


def samples_to_dict(samples: SampleSet) -> dict:
    s = samples.samples
    return {
        "format": FORMAT_VERSION,
        "config": samples.config,
        "n": s.shape[-1],
        "num_nodes": s.shape[1],
        "num_chains": samples.num_chains,
        "energy_trace": np.asarray(samples.energy_trace),
        "samples": [_flat(x) for x in s],
    }


def samples_from_dict(d: dict) -> SampleSet:
    _check_format(d)
    n = int(d["n"])
    draws = np.stack([_unflat(x, n) for x in d["samples"]]) if d["samples"] else np.empty((0, int(d["num_nodes"]), n, n))
    cfg = dict(d["config"])
    cfg["beta"] = float(cfg["beta"])
    return SampleSet(draws, SamplerConfig(**cfg), np.array(d["energy_trace"], dtype=float), int(d["num_chains"]))


def write_samples_binary(path, samples: np.ndarray) -> Path:
    """Header of three little-endian int64 (n, num_nodes, num_samples), then float64 row-major maps."""
    s = np.ascontiguousarray(samples, dtype="<f8")
    if s.ndim != 4 or s.shape[-1] != s.shape[-2]:
        raise ValueError("samples must have shape (num_samples, num_nodes, n, n)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(np.array([s.shape[-1], s.shape[1], s.shape[0]], dtype="<i8").tobytes())
        fh.write(s.tobytes())
    return path


def read_samples_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise ValueError("truncated sample file header")
    n, num_nodes, num = (int(x) for x in np.frombuffer(raw[:24], dtype="<i8"))
    body = np.frombuffer(raw[24:], dtype="<f8")
    if body.size != num * num_nodes * n * n:
        raise ValueError("sample file size does not match its header")
    return body.reshape(num, num_nodes, n, n).copy()
