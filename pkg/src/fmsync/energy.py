"""Potential energies of the synchronization posterior and their gradients.

For an edge (i, j) with observation ``C_ij`` and prediction ``P = C_i^T C_j``:

* Euclidean cost:   ``||C_ij - P||_F^2``
* Riemannian cost:  ``dist(P, C_ij)^2 = ||logm(P^T C_ij)||_F^2``

The potential sums these over edges. With a uniform prior the log posterior is
``-U`` up to a constant, so maximizing it is the MLE. The concentration of the
Gaussian noise model is the identity and is not configurable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from fmsync.manifold import _t, logm_so, project_to_tangent
from fmsync.problem import AbsoluteState, ObservationSet, relative_maps


class Cost(str, Enum):
    EUCLIDEAN = "euclidean"
    RIEMANNIAN = "riemannian"


@dataclass(frozen=True)
class EnergyConfig:
    variant: Cost = Cost.EUCLIDEAN

    def __post_init__(self):
        object.__setattr__(self, "variant", Cost(self.variant))


class Potential:
    """Potential bound to one observation set, evaluated on raw map arrays.

    Map arrays have shape ``(..., num_nodes, n, n)``; leading axes are batch
    axes (independent chains or restarts). Gradients come back with the same
    shape and a zero block for the anchor.
    """

    def __init__(self, obs: ObservationSet, config: EnergyConfig | None = None):
        self.obs = obs
        self.config = config or EnergyConfig()
        self.edges = obs.graph.edge_array
        self.rel = np.asarray(obs.relative_maps)
        self._src, self._dst = obs.graph.incidence()

    def _check(self, maps: np.ndarray) -> np.ndarray:
        maps = np.asarray(maps, dtype=float)
        if maps.shape[-3:] != (self.obs.graph.num_nodes, self.obs.n, self.obs.n):
            raise ValueError(
                f"maps of shape {maps.shape} do not match {self.obs.graph.num_nodes} nodes of size {self.obs.n}"
            )
        return maps

    def _scatter(self, from_src: np.ndarray, from_dst: np.ndarray) -> np.ndarray:
        # fixed edge order keeps summation deterministic
        g = np.einsum("ke,...eab->...kab", self._src, from_src)
        g += np.einsum("ke,...eab->...kab", self._dst, from_dst)
        g[..., 0, :, :] = 0.0
        return g

    def _edge_logs(self, maps: np.ndarray) -> np.ndarray:
        return logm_so(_t(relative_maps(maps, self.edges)) @ self.rel)

    def energy(self, maps: np.ndarray):
        maps = self._check(maps)
        if self.config.variant is Cost.EUCLIDEAN:
            resid = relative_maps(maps, self.edges) - self.rel
        else:
            resid = self._edge_logs(maps)
        u = np.sum(resid**2, axis=(-3, -2, -1))
        return float(u) if u.ndim == 0 else u

    def ambient_gradient(self, maps: np.ndarray) -> np.ndarray:
        """Euclidean gradient of the Euclidean cost, valid for arbitrary (off-group) matrices."""
        maps = self._check(maps)
        ci = maps[..., self.edges[:, 0], :, :]
        cj = maps[..., self.edges[:, 1], :, :]
        d = _t(ci) @ cj - self.rel
        return self._scatter(2.0 * cj @ _t(d), 2.0 * ci @ d)

    def gradient(self, maps: np.ndarray) -> np.ndarray:
        """Riemannian gradient on SO(n)^N for the configured cost."""
        maps = self._check(maps)
        if self.config.variant is Cost.EUCLIDEAN:
            return project_to_tangent(maps, self.ambient_gradient(maps))
        # grad_X dist^2(X, Y) = -2 X logm(X^T Y); with L = logm(P^T C_ij) the
        # C_j term is -2 C_j L and the C_i term is 2 C_i C_ij L C_ij^T.
        logs = self._edge_logs(maps)
        ci = maps[..., self.edges[:, 0], :, :]
        cj = maps[..., self.edges[:, 1], :, :]
        return self._scatter(2.0 * ci @ self.rel @ logs @ _t(self.rel), -2.0 * cj @ logs)


def _maps(state) -> np.ndarray:
    return state.maps if isinstance(state, AbsoluteState) else np.asarray(state, dtype=float)


def potential_euclidean(state, obs: ObservationSet) -> float:
    return Potential(obs, EnergyConfig(Cost.EUCLIDEAN)).energy(_maps(state))


def potential_riemannian(state, obs: ObservationSet) -> float:
    return Potential(obs, EnergyConfig(Cost.RIEMANNIAN)).energy(_maps(state))


def potential(state, obs: ObservationSet, config: EnergyConfig) -> float:
    return Potential(obs, config).energy(_maps(state))


def ambient_gradient_euclidean(state, obs: ObservationSet) -> np.ndarray:
    """Gradients for the non-anchor nodes, shape ``(num_nodes - 1, n, n)``."""
    return Potential(obs).ambient_gradient(_maps(state))[1:]


def riemannian_gradient(state, obs: ObservationSet, config: EnergyConfig) -> np.ndarray:
    """Tangent gradients for the non-anchor nodes, shape ``(num_nodes - 1, n, n)``."""
    return Potential(obs, config).gradient(_maps(state))[1:]


def log_posterior(state, obs: ObservationSet, config: EnergyConfig) -> float:
    return -potential(state, obs, config)
