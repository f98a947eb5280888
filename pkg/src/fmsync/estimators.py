"""Maximum-likelihood synchronization: unconstrained (ambient) and on SO(n).

Both estimators minimize the Euclidean-cost potential by gradient descent with
Armijo backtracking from a Barzilai-Borwein trial step. The constrained one
takes Riemannian gradient steps and retracts with the QR retraction, so every
iterate stays on SO(n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from fmsync.energy import Potential
from fmsync.manifold import frechet_mean, haar_sample, project_to_group, qf
from fmsync.problem import AbsoluteState, ObservationSet, pin_anchor, relative_maps
from fmsync.seeding import derive_rng


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 500
    grad_tol: float = 1e-8
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    restarts: int = 10

    def __post_init__(self):
        if min(self.max_iters, self.restarts) < 1 or min(self.grad_tol, self.initial_step) <= 0:
            raise ValueError("optimizer settings must be positive")
        if not (0 < self.backtrack_factor < 1 and 0 < self.armijo_c < 1):
            raise ValueError("backtrack_factor and armijo_c must lie in (0, 1)")


@dataclass
class EstimateResult:
    """Outcome of one optimizer run.

    ``maps`` holds all node maps including the identity anchor; for the
    unconstrained estimator they are ambient matrices. ``energy_trace[k]`` and
    ``distance_trace[k]`` describe iterate ``k`` (index 0 is the initialization).
    """

    maps: np.ndarray
    final_energy: float
    iterations: int
    converged: bool
    constrained: bool
    energy_trace: list[float] = field(default_factory=list)
    distance_trace: list[float] = field(default_factory=list)

    @property
    def state(self) -> AbsoluteState:
        if self.constrained:
            return AbsoluteState(self.maps)
        return AbsoluteState(pin_anchor(project_to_group(self.maps)))


def relative_errors(state, truth: ObservationSet) -> np.ndarray:
    """Per-edge ``||C_i^T C_j - C_ij^GT||_F``."""
    maps = state.maps if isinstance(state, AbsoluteState) else np.asarray(state)
    if maps.shape[0] != truth.graph.num_nodes or maps.shape[-1] != truth.n:
        raise ValueError("estimate and ground truth have different shapes")
    est = relative_maps(maps, truth.graph.edge_array)
    return np.linalg.norm(est - truth.relative_maps, axis=(-2, -1))


def evaluate_estimate(state, truth: ObservationSet) -> float:
    """Mean over edges of the Frobenius distance between estimated and true relative maps."""
    return float(np.mean(relative_errors(state, truth)))


def evaluate_estimate_squared(state, truth: ObservationSet) -> float:
    return float(np.mean(relative_errors(state, truth) ** 2))


def _trial_step(t_prev, x, g, prev, config: OptimizerConfig) -> float:
    # Barzilai-Borwein curvature estimate from the last step, capped at the
    # configured initial step. A fixed dyadic trial sequence can settle exactly
    # on t = 2 / curvature, where descent zigzags without converging.
    if prev is not None:
        s, y = x - prev[0], g - prev[1]
        sy, yy = float(np.sum(s * y)), float(np.sum(y * y))
        if sy > 0 and yy > 0:
            return min(config.initial_step, sy / yy)
    return min(config.initial_step, t_prev / config.backtrack_factor)


def _descend(
    x: np.ndarray,
    pot: Potential,
    gradient: Callable[[np.ndarray], np.ndarray],
    step: Callable[[np.ndarray, np.ndarray], np.ndarray],
    config: OptimizerConfig,
    monitor: Callable[[np.ndarray], float] | None,
    constrained: bool,
) -> EstimateResult:
    f = pot.energy(x)
    energies = [f]
    dists = [monitor(x)] if monitor else []
    t = config.initial_step
    converged = False
    it = 0
    prev = None
    while it < config.max_iters:
        g = gradient(x)
        gn2 = float(np.sum(g * g))
        if math.sqrt(gn2) < config.grad_tol:
            converged = True
            break
        t = _trial_step(t, x, g, prev, config)
        prev = (x, g)
        while True:
            y = step(x, -t * g)
            fy = pot.energy(y)
            if fy <= f - config.armijo_c * t * gn2:
                break
            t *= config.backtrack_factor
            if t < 1e-20 * config.initial_step:
                # no representable decrease left; x is stationary to working precision
                return EstimateResult(x, f, it, True, constrained, energies, dists)
        x, f = y, fy
        it += 1
        energies.append(f)
        if monitor:
            dists.append(monitor(x))
    return EstimateResult(x, f, it, converged, constrained, energies, dists)


def mle_unconstrained(
    obs: ObservationSet,
    init: np.ndarray,
    config: OptimizerConfig | None = None,
    truth: ObservationSet | None = None,
) -> EstimateResult:
    """Gradient descent in (R^{n x n})^{N-1} on the Euclidean-cost potential.

    ``init`` holds the ``num_nodes - 1`` free matrices; the anchor is the identity.
    With ``truth`` given, the distance trace evaluates the iterates projected onto SO(n).
    """
    config = config or OptimizerConfig()
    init = np.asarray(init, dtype=float)
    n = obs.n
    if init.shape != (obs.graph.num_nodes - 1, n, n):
        raise ValueError(f"init must have shape {(obs.graph.num_nodes - 1, n, n)}")
    x0 = np.concatenate([np.eye(n)[None], init])
    pot = Potential(obs)
    monitor = None
    if truth is not None:
        monitor = lambda x: evaluate_estimate(pin_anchor(project_to_group(x)), truth)  # noqa: E731
    return _descend(x0, pot, pot.ambient_gradient, lambda x, v: x + v, config, monitor, False)


def _retract_free(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    y = x.copy()
    y[1:] = qf(x[1:] + v[1:])
    return y


def mle_constrained(
    obs: ObservationSet,
    init: AbsoluteState,
    config: OptimizerConfig | None = None,
    truth: ObservationSet | None = None,
) -> EstimateResult:
    """Riemannian gradient descent on SO(n)^{N-1} with QR retraction and Armijo backtracking."""
    config = config or OptimizerConfig()
    if init.n != obs.n or init.num_nodes != obs.graph.num_nodes:
        raise ValueError("initial state does not match the observations")
    pot = Potential(obs)
    monitor = (lambda x: evaluate_estimate(x, truth)) if truth is not None else None  # noqa: E731
    return _descend(np.array(init.maps), pot, pot.gradient, _retract_free, config, monitor, True)


def run_estimator(
    obs: ObservationSet,
    estimator: str,
    rng: np.random.Generator,
    config: OptimizerConfig | None = None,
    truth: ObservationSet | None = None,
) -> EstimateResult:
    """One run of ``"MLE1"`` (unconstrained) or ``"MLE2"`` (constrained) from a Haar initialization."""
    init = pin_anchor(haar_sample(obs.n, rng, obs.graph.num_nodes))
    if estimator == "MLE1":
        return mle_unconstrained(obs, init[1:], config, truth)
    if estimator == "MLE2":
        return mle_constrained(obs, AbsoluteState.unchecked(init), config, truth)
    raise ValueError(f"unknown estimator {estimator!r}; expected 'MLE1' or 'MLE2'")


def multi_restart(
    obs: ObservationSet,
    estimator: str,
    restarts: int,
    seed: int,
    config: OptimizerConfig | None = None,
    truth: ObservationSet | None = None,
    return_runs: bool = False,
):
    """Run ``restarts`` independent Haar-initialized optimizations and average them.

    Constrained runs are combined by a per-node Frechet mean; unconstrained runs
    by the ambient arithmetic mean projected onto SO(n). Restart ``k`` draws its
    initialization from ``derive_rng(seed, k)``.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    runs = [
        run_estimator(obs, estimator, derive_rng(seed, k), config, truth) for k in range(restarts)
    ]
    if restarts == 1:
        state = runs[0].state
    elif estimator == "MLE2":
        stack = np.stack([r.maps for r in runs])
        means = [np.eye(obs.n)] + [frechet_mean(stack[:, i]) for i in range(1, obs.graph.num_nodes)]
        state = AbsoluteState.unchecked(np.stack(means))
    else:
        mean = np.mean([r.maps for r in runs], axis=0)
        state = AbsoluteState.unchecked(pin_anchor(project_to_group(mean)))
    return (state, runs) if return_runs else state
