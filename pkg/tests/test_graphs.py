import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transgap.graphs import (PropagationMatrix, appnp_apply,
                             appnp_coefficients, appnp_filter, build_graph,
                             degree_bound, drop_edge, gpr_powers,
                             inf_norm_power, normalized_adjacency,
                             sbm_generate)


def k3():
    return build_graph([(0, 1), (0, 2), (1, 2)], 3)


def p3():
    return build_graph([(0, 1), (1, 2)], 3)


class TestBuildGraph:
    def test_path_graph(self):
        g = p3()
        assert list(g.degrees) == [1, 2, 1]
        g.validate()

    def test_mirrored_pair_deduplicated(self):
        g = build_graph([(0, 1), (1, 0)], 2)
        assert g.edge_count == 1
        g.validate()

    def test_triangle(self):
        g = k3()
        assert list(g.degrees) == [2, 2, 2]
        assert g.edge_count == 3

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            build_graph([(0, 3)], 3)

    def test_self_loop_rejected_by_default(self):
        with pytest.raises(ValueError, match="self-loop"):
            build_graph([(1, 1)], 3)

    def test_self_loop_ignored_on_request(self):
        g = build_graph([(1, 1), (0, 1)], 3, on_self_loop="ignore")
        assert g.edge_count == 1

    def test_duplicate_edges_collapse(self):
        g = build_graph([(0, 1), (0, 1), (1, 0)], 2)
        assert g.edge_count == 1


class TestNormalizedAdjacency:
    def test_triangle_is_uniform(self):
        p = normalized_adjacency(k3())
        dense = p.to_scipy().todense()
        np.testing.assert_allclose(dense, np.full((3, 3), 1.0 / 3.0),
                                   atol=1e-15)
        np.testing.assert_allclose(p.row_sums(), 1.0, atol=1e-15)

    def test_isolated_node(self):
        g = build_graph([], 1)
        p = normalized_adjacency(g)
        np.testing.assert_allclose(p.to_scipy().todense(), [[1.0]])

    def test_path_entries(self):
        p = normalized_adjacency(p3())
        dense = np.asarray(p.to_scipy().todense())
        assert dense[0, 0] == pytest.approx(0.5)
        assert dense[0, 1] == pytest.approx(1.0 / np.sqrt(6.0))
        assert dense[1, 1] == pytest.approx(1.0 / 3.0)
        assert dense[1, 2] == pytest.approx(1.0 / np.sqrt(6.0))
        assert dense[2, 2] == pytest.approx(0.5)
        assert p.inf_norm == pytest.approx(2.0 / np.sqrt(6.0) + 1.0 / 3.0)

    def test_cached_norm_matches_fixed_order_recompute(self):
        g, _ = sbm_generate([20, 15], 0.3, 0.05, seed=5)
        p = normalized_adjacency(g)
        # exact equality: same left-to-right accumulation
        assert p.inf_norm == float(p.row_sums().max())

    def test_negative_values_rejected(self):
        with pytest.raises(ValueError):
            PropagationMatrix(n=1, row_ptr=np.array([0, 1]),
                              col_idx=np.array([0]),
                              values=np.array([-1.0]), inf_norm=1.0)


class TestInfNormPower:
    def test_triangle_row_stochastic(self):
        p = normalized_adjacency(k3())
        assert inf_norm_power(p, 2) == pytest.approx(1.0)

    def test_power_zero_is_identity(self):
        p = normalized_adjacency(p3())
        assert inf_norm_power(p, 0) == 1.0

    def test_path_first_power(self):
        p = normalized_adjacency(p3())
        assert inf_norm_power(p, 1) == pytest.approx(2 / np.sqrt(6) + 1 / 3)

    def test_matches_dense_power_small_graphs(self):
        for seed in range(6):
            g, _ = sbm_generate([7, 8], 0.4, 0.15, seed=seed)
            p = normalized_adjacency(g)
            dense = np.asarray(p.to_scipy().todense())
            for k in range(5):
                expect = np.linalg.norm(np.linalg.matrix_power(dense, k),
                                        ord=np.inf)
                got = inf_norm_power(p, k)
                np.testing.assert_allclose(got, expect, rtol=1e-12)

    def test_square_submultiplicative(self):
        for seed in range(20):
            g, _ = sbm_generate([12, 10], 0.35, 0.1, seed=seed)
            p = normalizedadj = normalized_adjacency(g)
            assert inf_norm_power(p, 2) <= p.inf_norm ** 2 + 1e-12


class TestDegreeBound:
    def test_regular_triangle(self):
        assert degree_bound(k3().degree_stats()) == pytest.approx(1.0)

    def test_path(self):
        b = degree_bound(p3().degree_stats())
        assert b == pytest.approx(np.sqrt(1.5))
        assert b >= normalized_adjacency(p3()).inf_norm

    def test_bounds_norm_on_random_graphs(self):
        for seed in range(25):
            g, _ = sbm_generate([15, 15], 0.4, 0.1, seed=seed)
            p = normalized_adjacency(g)
            assert p.inf_norm <= degree_bound(g.degree_stats()) + 1e-12


class TestTeleportFilter:
    def test_gamma_one_is_identity(self):
        p = normalized_adjacency(k3())
        f = appnp_filter(p, 1.0, 4)
        np.testing.assert_allclose(np.asarray(f.to_scipy().todense()),
                                   np.eye(3), atol=1e-15)

    def test_gamma_zero_is_pure_power(self):
        p = normalized_adjacency(p3())
        f = appnp_filter(p, 0.0, 2)
        dense = np.asarray(p.to_scipy().todense())
        np.testing.assert_allclose(np.asarray(f.to_scipy().todense()),
                                   dense @ dense, atol=1e-14)

    def test_half_restart_on_triangle(self):
        f = appnp_filter(normalized_adjacency(k3()), 0.5, 1)
        expect = 0.5 * np.eye(3) + 0.5 * np.full((3, 3), 1 / 3)
        np.testing.assert_allclose(np.asarray(f.to_scipy().todense()), expect,
                                   atol=1e-15)
        assert f.inf_norm == pytest.approx(1.0)

    def test_coefficients_sum_to_one(self):
        for gamma in (0.0, 0.1, 0.5, 0.9, 1.0):
            for big_k in (1, 3, 10):
                total = appnp_coefficients(gamma, big_k).sum()
                assert abs(total - 1.0) <= 1e-12

    def test_lazy_and_materialized_agree(self):
        g, _ = sbm_generate([25, 25], 0.2, 0.05, seed=3)
        p = normalized_adjacency(g)
        x = np.random.default_rng(0).normal(size=(50, 4))
        f = appnp_filter(p, 0.15, 6)
        np.testing.assert_allclose(f.matmat(x), appnp_apply(p, 0.15, 6, x),
                                   atol=1e-10)

    def test_gamma_out_of_range(self):
        with pytest.raises(ValueError):
            appnp_filter(normalized_adjacency(k3()), 1.5, 2)


class TestGprPowers:
    def test_order_zero(self):
        p = normalized_adjacency(k3())
        x = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(gpr_powers(p, x, 0), x[None])

    def test_triangle_projector(self):
        p = normalized_adjacency(k3())
        stack = gpr_powers(p, np.eye(3), 2)
        third = np.full((3, 3), 1 / 3)
        np.testing.assert_allclose(stack[1], third, atol=1e-15)
        np.testing.assert_allclose(stack[2], third, atol=1e-15)

    def test_identity_operator(self):
        eye = PropagationMatrix.from_scipy(
            normalized_adjacency(build_graph([], 4)).to_scipy())
        x = np.random.default_rng(1).normal(size=(4, 3))
        stack = gpr_powers(eye, x, 3)
        for k in range(4):
            np.testing.assert_allclose(stack[k], x)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gpr_powers(normalized_adjacency(k3()), np.zeros((4, 2)), 1)


class TestDropEdge:
    def test_keep_all(self):
        g, _ = sbm_generate([10, 10], 0.3, 0.1, seed=1)
        kept = drop_edge(g, 0.0, seed=9)
        assert np.array_equal(kept.col_idx, g.col_idx)

    def test_drop_all(self):
        g, _ = sbm_generate([10, 10], 0.3, 0.1, seed=1)
        empty = drop_edge(g, 1.0, seed=9)
        assert empty.edge_count == 0
        p = normalized_adjacency(empty)
        np.testing.assert_allclose(np.asarray(p.to_scipy().todense()),
                                   np.eye(20))

    def test_deterministic(self):
        g, _ = sbm_generate([10, 10], 0.3, 0.1, seed=1)
        a = drop_edge(g, 0.4, seed=7)
        b = drop_edge(g, 0.4, seed=7)
        assert np.array_equal(a.col_idx, b.col_idx)
        assert np.array_equal(a.row_ptr, b.row_ptr)

    def test_output_valid(self):
        g, _ = sbm_generate([15, 15], 0.3, 0.1, seed=2)
        for seed in range(5):
            drop_edge(g, 0.5, seed=seed).validate()


class TestSbm:
    def test_single_node(self):
        g, labels = sbm_generate([1], 0.7, 0.7, seed=0)
        assert g.n == 1 and g.edge_count == 0
        assert list(labels) == [0]

    def test_forced_triangles(self):
        g, labels = sbm_generate([3, 3], 1.0, 0.0, seed=0)
        assert g.edge_count == 6
        assert set(g.neighbors(0)) == {1, 2}
        assert set(g.neighbors(3)) == {4, 5}
        assert list(labels) == [0, 0, 0, 1, 1, 1]

    def test_seeded_edge_count_frozen(self):
        # golden value recorded once from this generator's seeded run
        g, _ = sbm_generate([50, 50], 0.1, 0.01, seed=0)
        assert g.edge_count == 272

    def test_empty_block_list_rejected(self):
        with pytest.raises(ValueError):
            sbm_generate([], 0.5, 0.5, seed=0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), p_in=st.floats(0, 1),
           p_out=st.floats(0, 1))
    def test_output_always_valid(self, seed, p_in, p_out):
        g, labels = sbm_generate([6, 5], p_in, p_out, seed=seed)
        g.validate()
        assert labels.shape == (11,)
