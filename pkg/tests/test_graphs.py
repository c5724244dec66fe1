import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gglr_retinex.graphs import (
    GradientOperator,
    GraphParams,
    apply_gradient,
    bilateral_weight,
    build_line_graph,
    gglr,
    glr,
    glr_edgewise,
    gng_laplacian,
    gradient_graph,
    laplacian,
)
from gglr_retinex.linalg import SparseSymMatrix, dense_eigvalsh, matvec

signals = st.integers(2, 40).flatmap(
    lambda n: arrays(np.float64, n, elements=st.floats(0.0, 1.0, allow_nan=False)))


class TestBilateralWeight:
    def test_identical(self):
        assert bilateral_weight(0.3, 0.3, 2, 2, 0.5, 1.0) == 1.0

    def test_one_bandwidth_apart(self):
        assert bilateral_weight(0.7, 0.2, 0, 0, 0.5, 1.0) == pytest.approx(math.exp(-1), rel=1e-12)

    def test_closed_form(self):
        expected = math.exp(-(0.5 - 0.3) ** 2 / 1.0 - 1.0 / 1.0)
        assert expected == pytest.approx(0.353455, abs=1e-6)
        assert bilateral_weight(0.5, 0.3, 0, 1, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_2d_coordinates(self):
        w = bilateral_weight(0.0, 0.0, (0, 0), (1, 1), 1.0, 2.0)
        assert w == pytest.approx(math.exp(-2 / 4), rel=1e-12)


class TestLineGraph:
    def test_constant_signal(self):
        p = GraphParams(sigma_r=0.3, sigma_c=1.7, neighborhood_radius=1)
        g = build_line_graph([0.4, 0.4, 0.4], p)
        assert g.num_edges == 2
        np.testing.assert_allclose(g.w, math.exp(-1 / 1.7 ** 2), rtol=1e-14)

    def test_step(self):
        p = GraphParams(sigma_r=1.0, sigma_c=1.0, neighborhood_radius=1)
        g = build_line_graph([0.0, 0.0, 1.0], p)
        assert g.weights == [(0, 1, pytest.approx(math.exp(-1))), (1, 2, pytest.approx(math.exp(-2)))]

    def test_radius_two_on_three_nodes(self):
        g = build_line_graph([0.1, 0.2, 0.3], GraphParams(neighborhood_radius=2))
        assert g.num_edges == 3
        assert (0, 2) in [(i, j) for i, j, _ in g.weights]
        w02 = [w for i, j, w in g.weights if (i, j) == (0, 2)][0]
        assert w02 == pytest.approx(math.exp(-(0.2 ** 2) - 4.0), rel=1e-12)

    def test_too_short(self):
        with pytest.raises(ValueError):
            build_line_graph([0.5], GraphParams())

    def test_gradient_bandwidth_used(self):
        p = GraphParams(sigma_r=1.0, sigma_l=0.1, neighborhood_radius=1)
        g = build_line_graph([0.0, 0.1], p, bandwidth="sigma_l")
        assert g.w[0] == pytest.approx(math.exp(-1 - 1))

    def test_pruning_is_opt_in(self):
        x = [0.0, 1.0, 0.0, 1.0]
        assert build_line_graph(x, GraphParams(sigma_r=0.01)).num_edges == 5
        assert build_line_graph(x, GraphParams(sigma_r=0.01, prune_below=1e-12)).num_edges == 2

    @given(signals, st.integers(1, 4))
    def test_weight_range_and_locality(self, x, radius):
        g = build_line_graph(x, GraphParams(neighborhood_radius=radius))
        assert np.all(g.w > 0) and np.all(g.w <= 1)
        assert np.all(g.i < g.j) and np.all(g.j - g.i <= radius)


class TestLaplacian:
    def test_single_edge(self):
        g = build_line_graph([0.0, 0.5], GraphParams(neighborhood_radius=1))
        w = g.w[0]
        np.testing.assert_allclose(laplacian(g).to_dense(), [[w, -w], [-w, w]])

    def test_unit_path(self):
        from gglr_retinex.graphs import LineGraph
        g = LineGraph(3, 1, np.array([0, 1]), np.array([1, 2]), np.ones(2))
        np.testing.assert_array_equal(laplacian(g).to_dense(), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])

    @given(signals, st.integers(1, 3))
    def test_psd_and_zero_row_sums(self, x, radius):
        L = laplacian(build_line_graph(x, GraphParams(neighborhood_radius=radius)))
        assert dense_eigvalsh(L)[0] >= -1e-10
        assert np.max(np.abs(matvec(L, np.ones(L.n)))) <= 1e-12

    @given(signals, st.integers(0, 2 ** 32 - 1))
    def test_glr_edge_sum(self, x, seed):
        g = build_line_graph(x, GraphParams())
        s = np.random.default_rng(seed).standard_normal(g.n)
        brute = sum(w * (s[i] - s[j]) ** 2 for i, j, w in g.weights)
        assert glr(laplacian(g), s) == pytest.approx(brute, rel=1e-10, abs=1e-300)
        assert glr_edgewise(g, s) == pytest.approx(brute, rel=1e-12, abs=1e-300)


class TestGradient:
    def test_constant(self):
        np.testing.assert_array_equal(apply_gradient([5, 5, 5]), [0, 0])

    def test_differences(self):
        np.testing.assert_array_equal(apply_gradient([0, 1, 3]), [1, 2])

    def test_ramp(self):
        np.testing.assert_allclose(apply_gradient([2.0, 2.5, 3.0, 3.5]), [0.5, 0.5, 0.5])

    def test_short(self):
        with pytest.raises(ValueError):
            apply_gradient([1.0])

    @pytest.mark.parametrize("n", [2, 3, 7, 20])
    def test_operator_rank_and_nullspace(self, n):
        F = GradientOperator(n).dense()
        assert F.shape == (n - 1, n)
        np.testing.assert_array_equal(F @ np.ones(n), 0)
        assert np.linalg.matrix_rank(F) == n - 1
        x = np.random.default_rng(n).standard_normal(n)
        np.testing.assert_allclose(GradientOperator(n).apply(x), F @ x)
        g = np.random.default_rng(n + 1).standard_normal(n - 1)
        np.testing.assert_allclose(GradientOperator(n).apply_transpose(g), F.T @ g)


class TestGNG:
    def test_three_nodes_second_difference(self):
        wb = 0.37
        Lbar = SparseSymMatrix.from_dense([[wb, -wb], [-wb, wb]])
        expected = wb * np.array([[1, -2, 1], [-2, 4, -2], [1, -2, 1]])
        np.testing.assert_allclose(gng_laplacian(Lbar, 3).to_dense(), expected, rtol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            gng_laplacian(SparseSymMatrix.identity(3), 3)

    @given(signals.filter(lambda x: x.size >= 3))
    def test_matches_dense_product_and_nullspace(self, x):
        n = x.size
        Lbar = laplacian(gradient_graph(x, GraphParams()))
        G = gng_laplacian(Lbar, n)
        F = GradientOperator(n).dense()
        dense = F.T @ Lbar.to_dense() @ F
        np.testing.assert_allclose(G.to_dense(), dense, atol=1e-13)
        assert G.is_structurally_symmetric()
        assert dense_eigvalsh(G)[0] >= -1e-10 * max(1.0, np.abs(dense).max())
        norm = np.abs(G.to_dense()).sum(axis=1).max()
        assert np.abs(matvec(G, np.ones(n))).max() <= 1e-12 * norm
        assert np.abs(matvec(G, np.arange(1.0, n + 1))).max() <= 1e-12 * norm * n

    def test_signed_edges(self):
        # with a 3-node row the pulled-back graph has a positive (1, 3) entry: a negative edge
        G = gng_laplacian(laplacian(gradient_graph([0.1, 0.2, 0.3], GraphParams())), 3).to_dense()
        assert G[0, 2] > 0 and G[0, 1] < 0


@given(st.integers(5, 64), st.floats(-1, 1), st.floats(-0.05, 0.05))
def test_gglr_zero_on_planar(n, a, d):
    x = a + d * np.arange(n)
    assert gglr(x, GraphParams()) <= 1e-12 * max(1.0, np.abs(x).max() ** 2)
