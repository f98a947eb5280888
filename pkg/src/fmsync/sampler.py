"""Riemannian Langevin sampler on SO(n)^{N-1} (anchor fixed).

One step per non-anchor node ``i``::

    V_i = Pi_{C_i}(-h grad_i U + sqrt(2h / beta) Z_i),   Z_i ~ N(0, I)
    C_i <- qf(C_i + V_i)

The chain targets ``exp(-beta U)`` with respect to the Haar measure, up to the
O(h) bias of an unadjusted scheme. ``beta = inf`` switches the noise off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fmsync.energy import Cost, EnergyConfig, Potential
from fmsync.manifold import frechet_mean, project_to_group, project_to_tangent, qf
from fmsync.problem import AbsoluteState, ObservationSet, pin_anchor


@dataclass(frozen=True)
class SamplerConfig:
    step_size: float = 1e-3
    beta: float = 100.0
    num_samples: int = 1000
    burn_in: int = 200
    thinning: int = 1
    variant: EnergyConfig = field(default_factory=EnergyConfig)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.variant, (str, dict)):
            v = self.variant if isinstance(self.variant, str) else self.variant["variant"]
            object.__setattr__(self, "variant", EnergyConfig(v))
        if self.step_size < 0 or not self.beta > 0:
            raise ValueError("step_size must be >= 0 and beta > 0")
        if self.num_samples < 1 or self.thinning < 1 or self.burn_in < 0:
            raise ValueError("num_samples and thinning must be >= 1, burn_in >= 0")

    @property
    def total_steps(self) -> int:
        return self.burn_in + self.num_samples * self.thinning


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Recorded draws, shape ``(num_chains * num_samples, num_nodes, n, n)``, chain-major."""

    samples: np.ndarray
    config: SamplerConfig
    energy_trace: np.ndarray
    num_chains: int = 1

    def __len__(self) -> int:
        return self.samples.shape[0]

    def states(self) -> list[AbsoluteState]:
        return [AbsoluteState.unchecked(s) for s in self.samples]

    def node(self, i: int) -> np.ndarray:
        """All draws of node ``i``, shape ``(len(self), n, n)``."""
        return self.samples[:, i]


def _noise_scale(config: SamplerConfig) -> float:
    return 0.0 if math.isinf(config.beta) else math.sqrt(2.0 * config.step_size / config.beta)


def _step(maps: np.ndarray, pot: Potential, config: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    free = maps[..., 1:, :, :]
    # the tangent projection below also projects the Euclidean-cost ambient gradient
    if pot.config.variant is Cost.EUCLIDEAN:
        grad = pot.ambient_gradient(maps)
    else:
        grad = pot.gradient(maps)
    drift = -config.step_size * grad[..., 1:, :, :]
    scale = _noise_scale(config)
    if scale > 0:
        drift = drift + scale * rng.standard_normal(free.shape)
    out = maps.copy()
    out[..., 1:, :, :] = qf(free + project_to_tangent(free, drift))
    return out


def langevin_step(
    state: AbsoluteState, obs: ObservationSet, config: SamplerConfig, rng: np.random.Generator
) -> AbsoluteState:
    if config.step_size == 0:
        return state
    pot = Potential(obs, config.variant)
    return AbsoluteState.unchecked(_step(np.asarray(state.maps), pot, config, rng))


def run_chains(
    obs: ObservationSet,
    init,
    config: SamplerConfig,
    num_chains: int = 1,
    record_energy: bool = True,
) -> SampleSet:
    """Run ``num_chains`` chains in lockstep from ``init``.

    ``init`` is one AbsoluteState shared by every chain, or an array of shape
    ``(num_chains, num_nodes, n, n)`` with one starting state per chain
    (anchors must be the identity). All chains draw their noise from one generator seeded with ``config.seed``,
    as a ``(num_chains, ...)`` block per step, so the output depends only on
    ``(config, num_chains)``. ``energy_trace[c, k]`` is U before step ``k`` of chain ``c``.
    """
    pot = Potential(obs, config.variant)
    rng = np.random.default_rng(config.seed)
    if isinstance(init, AbsoluteState):
        maps = np.repeat(np.asarray(init.maps, dtype=float)[None], num_chains, axis=0)
    else:
        maps = np.array(init, dtype=float)
        if maps.ndim != 4 or maps.shape[0] != num_chains:
            raise ValueError("per-chain init must have shape (num_chains, num_nodes, n, n)")
        if not np.array_equal(maps[:, 0], np.broadcast_to(np.eye(maps.shape[-1]), maps[:, 0].shape)):
            raise ValueError("anchor map must be exactly the identity in every chain")
    pot._check(maps)
    out = np.empty((num_chains, config.num_samples) + maps.shape[1:])
    energies = np.empty((num_chains, config.total_steps)) if record_energy else np.empty((num_chains, 0))
    kept = 0
    for k in range(config.total_steps):
        if record_energy:
            energies[:, k] = pot.energy(maps)
        if config.step_size > 0:
            maps = _step(maps, pot, config, rng)
        after = k + 1 - config.burn_in
        if after > 0 and after % config.thinning == 0:
            out[:, kept] = maps
            kept += 1
    samples = out.reshape((-1,) + maps.shape[1:])
    trace = energies[0] if num_chains == 1 else energies
    return SampleSet(samples, config, trace, num_chains)


def run_chain(obs: ObservationSet, init: AbsoluteState, config: SamplerConfig) -> SampleSet:
    """Burn in, then keep every ``thinning``-th state until ``num_samples`` are collected."""
    return run_chains(obs, init, config, num_chains=1)


def posterior_mean(samples: SampleSet, method: str = "frechet") -> AbsoluteState:
    """Per-node Frechet mean (``"frechet"``) or projected arithmetic mean (``"euclidean"``)."""
    draws = samples.samples
    if draws.shape[0] == 0:
        raise ValueError("empty sample set")
    if method == "frechet":
        means = [draws[0, 0]] + [frechet_mean(draws[:, i]) for i in range(1, draws.shape[1])]
        return AbsoluteState.unchecked(np.stack(means))
    if method == "euclidean":
        return AbsoluteState.unchecked(pin_anchor(project_to_group(draws.mean(axis=0))))
    raise ValueError(f"unknown aggregation {method!r}")
