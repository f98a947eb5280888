import numpy as np
import pytest
from hypothesis import settings, strategies as st

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def gibbs_angle_test(variant: str, num_chains: int, steps: int, beta: float = 100.0, h: float = 1e-3, seed: int = 0):
    """Chi-square test of the sampled rotation angle on a single n = 2 edge.

    Chains start from exact draws of the target angle law, so after ``steps``
    Langevin steps the recorded angles must still follow exp(-beta U(theta)).
    Returns (p_value, sampled std, target std).
    """
    from scipy import integrate, stats

    from fmsync.energy import EnergyConfig
    from fmsync.problem import ObservationSet, SyncGraph
    from fmsync.sampler import SamplerConfig, run_chains

    obs = ObservationSet(SyncGraph(2, ((0, 1),)), np.eye(2)[None])
    if variant == "euclidean":
        u = lambda x: 8.0 * np.sin(x / 2) ** 2  # noqa: E731
    else:
        u = lambda x: 2.0 * x**2  # noqa: E731
    grid = np.linspace(-np.pi, np.pi, 200_001)
    dens = np.exp(-beta * u(grid))
    cdf = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
    cdf /= cdf[-1]
    target_std = np.sqrt(integrate.trapezoid(grid**2 * dens, grid) / integrate.trapezoid(dens, grid))

    rng = np.random.default_rng(seed)
    theta0 = np.interp(rng.random(num_chains), cdf, grid)
    init = np.broadcast_to(np.eye(2), (num_chains, 2, 2, 2)).copy()
    init[:, 1] = np.stack([rot2(t) for t in theta0])
    cfg = SamplerConfig(
        step_size=h, beta=beta, num_samples=1, burn_in=steps - 1, variant=EnergyConfig(variant), seed=seed + 1
    )
    draws = run_chains(obs, init, cfg, num_chains, record_energy=False).node(1)
    theta = np.arctan2(draws[:, 1, 0], draws[:, 0, 0])

    bins = 40
    edges = np.interp(np.arange(bins + 1) / bins, cdf, grid)
    edges[0], edges[-1] = -np.pi, np.pi
    counts = np.histogram(theta, bins=edges)[0]
    return stats.chisquare(counts).pvalue, float(theta.std()), float(target_std)
