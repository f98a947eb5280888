import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rot2, seeds
from fmsync.manifold import SingularMatrixError, haar_sample, is_rotation
from fmsync.problem import (
    AbsoluteState,
    ObservationSet,
    SyncGraph,
    consistency_residual,
    corrupt,
    cycle_residuals,
    fit_map_procrustes,
    generate_graph,
    generate_ground_truth,
    num_edges_for_density,
    pin_anchor,
)


class TestGraph:
    def test_complete_graph_on_four_nodes(self, rng):
        g = generate_graph(4, 1.0, rng)
        assert g.num_edges == 6
        assert {frozenset(e) for e in g.edges} == {frozenset((i, j)) for i in range(4) for j in range(i + 1, 4)}

    def test_two_thirds_density_on_eleven_nodes(self, rng):
        g = generate_graph(11, 2 / 3, rng)
        assert g.num_edges == 37 and g.is_connected()

    def test_table_densities(self):
        assert [num_edges_for_density(11, d) for d in (1.0, 0.833, 0.667)] == [55, 46, 37]
        assert num_edges_for_density(11, 0.6) == 33

    def test_two_nodes(self, rng):
        g = generate_graph(2, 1.0, rng)
        assert g.num_edges == 1 and set(g.edges[0]) == {0, 1}

    @given(st.integers(2, 12), st.floats(0.05, 1.0), seeds)
    def test_connected_with_exact_edge_count(self, n, d, seed):
        m = num_edges_for_density(n, d)
        if m < n - 1:
            with pytest.raises(ValueError):
                generate_graph(n, d, np.random.default_rng(seed))
            return
        g = generate_graph(n, d, np.random.default_rng(seed))
        assert g.num_edges == m and g.is_connected()

    def test_deterministic(self):
        a = generate_graph(9, 0.5, np.random.default_rng(3))
        b = generate_graph(9, 0.5, np.random.default_rng(3))
        assert a.edges == b.edges

    def test_directions_are_mixed(self, rng):
        g = generate_graph(11, 1.0, rng)
        forward = sum(i < j for i, j in g.edges)
        assert 0 < forward < g.num_edges

    @pytest.mark.parametrize(
        "edges",
        [((0, 0),), ((0, 1), (1, 0)), ((0, 1), (0, 1)), ((0, 5),), ((0, 1),)],
    )
    def test_invalid_graphs(self, edges):
        with pytest.raises(ValueError):
            SyncGraph(3, edges)

    def test_too_sparse(self, rng):
        with pytest.raises(ValueError):
            generate_graph(10, 0.1, rng)

    def test_incidence(self):
        src, dst = SyncGraph(3, ((0, 1), (2, 1))).incidence()
        np.testing.assert_array_equal(src, [[1, 0], [0, 0], [0, 1]])
        np.testing.assert_array_equal(dst, [[0, 0], [1, 1], [0, 0]])


class TestGroundTruth:
    def test_cycle_consistency_per_edge(self, rng):
        g = generate_graph(6, 0.8, rng)
        truth, obs = generate_ground_truth(g, 5, rng)
        assert cycle_residuals(truth, obs).max() < 1e-12

    def test_three_cycles_compose_to_identity(self, rng):
        g = generate_graph(5, 1.0, rng)
        truth, _ = generate_ground_truth(g, 4, rng)
        c = truth.maps
        rel = lambda i, j: c[i].T @ c[j]  # noqa: E731
        for i, j, k in [(0, 1, 2), (1, 3, 4), (0, 2, 4)]:
            np.testing.assert_allclose(rel(i, j) @ rel(j, k) @ rel(k, i), np.eye(4), atol=1e-12)

    def test_shapes_and_anchor(self, rng):
        truth, obs = generate_ground_truth(generate_graph(11, 1.0, rng), 20, rng)
        assert truth.maps.shape == (11, 20, 20)
        assert np.array_equal(truth.maps[0], np.eye(20))
        assert is_rotation(truth.maps) and is_rotation(obs.relative_maps)


class TestCorrupt:
    def test_zero_noise_is_identity(self, rng):
        _, obs = generate_ground_truth(generate_graph(4, 1.0, rng), 3, rng)
        out = corrupt(obs, 0.0, rng)
        np.testing.assert_array_equal(out.relative_maps, obs.relative_maps)

    def test_output_on_group_and_records_sigma(self, rng):
        _, obs = generate_ground_truth(generate_graph(4, 1.0, rng), 6, rng)
        out = corrupt(obs, 0.4, rng)
        assert out.sigma2 == 0.4 and is_rotation(out.relative_maps)

    def test_distance_grows_with_noise(self):
        sigmas = np.round(np.arange(1, 11) * 0.1, 1)
        means = np.zeros(len(sigmas))
        for seed in range(20):
            rng = np.random.default_rng(seed)
            _, obs = generate_ground_truth(generate_graph(5, 1.0, rng), 20, rng)
            for k, s in enumerate(sigmas):
                noisy = corrupt(obs, s, rng)
                means[k] += np.mean(np.linalg.norm(noisy.relative_maps - obs.relative_maps, axis=(-2, -1)))
        assert np.all(np.diff(means) >= 0)

    def test_negative_noise(self, rng):
        _, obs = generate_ground_truth(generate_graph(3, 1.0, rng), 3, rng)
        with pytest.raises(ValueError):
            corrupt(obs, -0.1, rng)


class TestProcrustes:
    def test_exact_recovery(self, rng):
        r0 = haar_sample(6, rng)
        b = rng.standard_normal((6, 30))
        c = fit_map_procrustes(r0 @ b, b)
        np.testing.assert_allclose(c, r0, atol=1e-10)
        assert np.linalg.norm(c @ b - r0 @ b) < 1e-10

    def test_identity(self, rng):
        b = rng.standard_normal((4, 10))
        np.testing.assert_allclose(fit_map_procrustes(b, b), np.eye(4), atol=1e-12)

    def test_noisy_fit_beats_truth_and_random(self, rng):
        r0 = haar_sample(5, rng)
        b = rng.standard_normal((5, 40))
        a = r0 @ b + 0.3 * rng.standard_normal((5, 40))
        c = fit_map_procrustes(a, b)
        res = np.linalg.norm(c @ b - a)
        assert res <= np.linalg.norm(r0 @ b - a)
        assert res <= np.linalg.norm(haar_sample(5, rng, 1000) @ b - a, axis=(-2, -1)).min()

    @given(seeds)
    def test_recovers_any_rotation(self, seed):
        rng = np.random.default_rng(seed)
        r = haar_sample(8, rng)
        b = rng.standard_normal((8, 16))
        assert np.abs(fit_map_procrustes(r @ b, b) - r).max() < 1e-9

    def test_warns_when_underdetermined(self, rng):
        # fewer probes than basis functions also makes A B^T rank deficient
        b = rng.standard_normal((5, 3))
        with pytest.warns(UserWarning), pytest.raises(SingularMatrixError):
            fit_map_procrustes(b, b)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            fit_map_procrustes(np.ones((3, 4)), np.ones((3, 5)))


class TestConsistencyResidual:
    def test_zero_at_truth(self, rng):
        truth, obs = generate_ground_truth(generate_graph(5, 1.0, rng), 4, rng)
        assert consistency_residual(truth, obs) < 1e-20

    def test_single_edge_closed_form(self):
        obs = ObservationSet(SyncGraph(2, ((0, 1),)), np.eye(2)[None])
        assert consistency_residual(AbsoluteState(np.stack([np.eye(2)] * 2)), obs) == 0.0
        state = AbsoluteState(np.stack([np.eye(2), rot2(np.pi / 2)]))
        assert consistency_residual(state, obs) == pytest.approx(4.0, abs=1e-12)

    def test_conjugation_invariance(self, rng):
        g = generate_graph(5, 0.8, rng)
        state = AbsoluteState(pin_anchor(haar_sample(3, rng, 5)))
        obs = ObservationSet(g, haar_sample(3, rng, g.num_edges))
        gauge = haar_sample(3, rng)
        moved = AbsoluteState.unchecked(state.maps @ gauge)
        obs2 = ObservationSet(g, gauge.T @ obs.relative_maps @ gauge)
        assert abs(consistency_residual(moved, obs2) - consistency_residual(state, obs)) < 1e-12

    def test_dimension_mismatch(self, rng):
        truth, obs = generate_ground_truth(generate_graph(3, 1.0, rng), 3, rng)
        with pytest.raises(ValueError):
            consistency_residual(AbsoluteState(np.stack([np.eye(2)] * 3)), obs)


class TestContainers:
    def test_state_requires_exact_identity_anchor(self, rng):
        maps = haar_sample(3, rng, 3)
        with pytest.raises(ValueError):
            AbsoluteState(maps)

    def test_state_rejects_non_rotation(self):
        maps = np.stack([np.eye(2), 2 * np.eye(2)])
        with pytest.raises(ValueError):
            AbsoluteState(maps)

    def test_state_is_read_only(self, rng):
        s = AbsoluteState(pin_anchor(haar_sample(3, rng, 3)))
        with pytest.raises(ValueError):
            s.maps[1, 0, 0] = 1.0

    def test_state_equality(self, rng):
        m = pin_anchor(haar_sample(3, rng, 3))
        assert AbsoluteState(m) == AbsoluteState(m.copy())

    def test_observations_need_one_map_per_edge(self):
        with pytest.raises(ValueError):
            ObservationSet(SyncGraph(3, ((0, 1), (1, 2))), np.eye(2)[None])

    def test_observations_must_be_rotations(self):
        with pytest.raises(ValueError):
            ObservationSet(SyncGraph(2, ((0, 1),)), np.diag([1.0, -1.0])[None])

    def test_no_warnings_for_full_rank_fit(self, rng):
        b = rng.standard_normal((3, 9))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            fit_map_procrustes(b, b)
