"""Synchronization instances: graphs, synthetic ground truth, corruption, Procrustes fits.

Nodes are 0-indexed in memory with node 0 as the anchor (C_0 = I). File formats
use the 1-indexed convention; see :mod:`fmsync.io`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from fmsync.manifold import _t, check_rotation, haar_sample, project_to_group


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SyncGraph:
    """Directed graph over ``num_nodes`` shapes; each undirected pair stored at most once."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.num_nodes < 2:
            raise ValueError("a synchronization graph needs at least 2 nodes")
        seen = set()
        for i, j in edges:
            if i == j:
                raise ValueError(f"self loop on node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"edge ({i}, {j}) references a missing node")
            key = frozenset((i, j))
            if key in seen:
                raise ValueError(f"duplicate edge between {i} and {j}")
            seen.add(key)
        if not self.is_connected():
            raise ValueError("synchronization graph is not connected")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_array(self) -> np.ndarray:
        return np.array(self.edges, dtype=np.intp).reshape(-1, 2)

    def is_connected(self) -> bool:
        adj = {k: set() for k in range(self.num_nodes)}
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        stack, seen = [0], {0}
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.num_nodes

    def incidence(self) -> tuple[np.ndarray, np.ndarray]:
        """One-hot (num_nodes, num_edges) matrices selecting edge sources and targets."""
        e = self.edge_array
        src = np.zeros((self.num_nodes, self.num_edges))
        dst = np.zeros((self.num_nodes, self.num_edges))
        src[e[:, 0], np.arange(self.num_edges)] = 1.0
        dst[e[:, 1], np.arange(self.num_edges)] = 1.0
        return src, dst


@dataclass(frozen=True)
class ObservationSet:
    """Observed relative maps, one per edge, in the order of ``graph.edges``."""

    graph: SyncGraph
    relative_maps: np.ndarray
    sigma2: float = 0.0

    def __post_init__(self):
        rel = check_rotation(self.relative_maps)
        if rel.ndim != 3 or rel.shape[0] != self.graph.num_edges:
            raise ValueError("need exactly one relative map per edge")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        object.__setattr__(self, "relative_maps", _frozen(rel))
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def n(self) -> int:
        return self.relative_maps.shape[-1]


@dataclass(frozen=True, eq=False)
class AbsoluteState:
    """One absolute map per node, anchor (node 0) pinned to the identity."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=float)
        if maps.ndim != 3 or maps.shape[1] != maps.shape[2]:
            raise ValueError("maps must have shape (num_nodes, n, n)")
        if not np.array_equal(maps[0], np.eye(maps.shape[-1])):
            raise ValueError("anchor map must be exactly the identity")
        check_rotation(maps)
        object.__setattr__(self, "maps", _frozen(maps))

    @classmethod
    def unchecked(cls, maps: np.ndarray) -> "AbsoluteState":
        """Skip validation; for operations whose output is on SO(n) by construction."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "maps", _frozen(maps))
        return obj

    @property
    def num_nodes(self) -> int:
        return self.maps.shape[0]

    @property
    def n(self) -> int:
        return self.maps.shape[-1]

    def __eq__(self, other):
        return isinstance(other, AbsoluteState) and np.array_equal(self.maps, other.maps)

    __hash__ = None


def pin_anchor(maps: np.ndarray) -> np.ndarray:
    """Copy of ``maps`` with node 0 set to the identity."""
    maps = np.array(maps, dtype=float)
    maps[..., 0, :, :] = np.eye(maps.shape[-1])
    return maps


def num_edges_for_density(num_nodes: int, density: float) -> int:
    total = num_nodes * (num_nodes - 1) // 2
    # the tolerance keeps e.g. 0.6 * 55 = 33.000000000000004 from rounding up
    return math.ceil(density * total - 1e-9)


def generate_graph(num_nodes: int, edge_density: float, rng: np.random.Generator) -> SyncGraph:
    """Connected random graph with ``ceil(density * N(N-1)/2)`` edges.

    A uniform spanning tree (Aldous-Broder random walk on the complete graph)
    guarantees connectivity; the remaining edges are drawn uniformly from the
    unused pairs. Each edge gets a uniformly random direction.
    """
    if num_nodes < 2:
        raise ValueError("num_nodes must be at least 2")
    if not 0.0 < edge_density <= 1.0:
        raise ValueError("edge_density must lie in (0, 1]")
    m = num_edges_for_density(num_nodes, edge_density)
    if m < num_nodes - 1:
        raise ValueError(
            f"density {edge_density} gives {m} edges; {num_nodes - 1} are needed for connectivity"
        )

    current = int(rng.integers(num_nodes))
    visited = {current}
    tree = []
    while len(visited) < num_nodes:
        nxt = int(rng.integers(num_nodes - 1))
        nxt += nxt >= current
        if nxt not in visited:
            visited.add(nxt)
            tree.append((min(current, nxt), max(current, nxt)))
        current = nxt

    used = set(tree)
    rest = [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes) if (i, j) not in used]
    extra = rng.choice(len(rest), size=m - len(tree), replace=False) if m > len(tree) else []
    pairs = sorted(tree + [rest[k] for k in extra])
    flip = rng.random(len(pairs)) < 0.5
    edges = tuple((j, i) if f else (i, j) for (i, j), f in zip(pairs, flip))
    return SyncGraph(num_nodes, edges)


def relative_maps(maps: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """``C_i^T C_j`` for every edge; broadcasts over leading batch axes of ``maps``."""
    return _t(maps[..., edges[:, 0], :, :]) @ maps[..., edges[:, 1], :, :]


def generate_ground_truth(
    graph: SyncGraph, n: int, rng: np.random.Generator
) -> tuple[AbsoluteState, ObservationSet]:
    """Haar absolute maps (anchor = I) and the exactly consistent relative maps."""
    maps = pin_anchor(haar_sample(n, rng, graph.num_nodes))
    state = AbsoluteState(maps)
    return state, ObservationSet(graph, relative_maps(state.maps, graph.edge_array), 0.0)


def corrupt(obs: ObservationSet, sigma2: float, rng: np.random.Generator) -> ObservationSet:
    """Add i.i.d. N(0, sigma2) entries to every relative map, then project back onto SO(n)."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if sigma2 == 0:
        return ObservationSet(obs.graph, obs.relative_maps, 0.0)
    noise = rng.standard_normal(obs.relative_maps.shape) * math.sqrt(sigma2)
    return ObservationSet(obs.graph, project_to_group(obs.relative_maps + noise), sigma2)


def fit_map_procrustes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation minimizing ``||C B - A||_F`` given coefficient matrices with probe functions in columns."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"coefficient matrices must share an (n, K) shape, got {a.shape} and {b.shape}")
    if a.shape[1] < a.shape[0]:
        warnings.warn("fewer probe functions than basis functions; the fit is underdetermined")
    return project_to_group(a @ b.T)


def cycle_residuals(state: AbsoluteState, obs: ObservationSet) -> np.ndarray:
    """Per-edge ``||C_i C_ij - C_j||_F``."""
    e = obs.graph.edge_array
    m = np.asarray(state.maps)
    return np.linalg.norm(m[e[:, 0]] @ obs.relative_maps - m[e[:, 1]], axis=(-2, -1))


def consistency_residual(state: AbsoluteState, obs: ObservationSet) -> float:
    """``sum_(i,j) ||C_i C_ij - C_j||_F^2``."""
    if state.n != obs.n or state.num_nodes != obs.graph.num_nodes:
        raise ValueError("state and observations disagree on dimensions")
    return float(np.sum(cycle_residuals(state, obs) ** 2))
