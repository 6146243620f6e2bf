import math

import numpy as np
import pytest

from polymrf.errors import ShapeMismatch
from polymrf.graph import Graph, chain_graph, divergence, gradient, grid_graph, operator_norm_estimate


class TestConstruction:
    def test_single_vertex(self):
        g = grid_graph(1, 1)
        assert (g.num_vertices, g.num_edges) == (1, 0)

    def test_two_cells(self):
        g = grid_graph(2, 1)
        assert g.edges == ((0, 1),)

    def test_grid_16(self):
        g = grid_graph(16, 16)
        assert g.num_vertices == 256
        assert g.num_edges == 480

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            Graph(2, [(0, 0)])

    def test_rejects_duplicate_edge(self):
        with pytest.raises(ValueError):
            Graph(2, [(0, 1), (1, 0)])

    def test_orientation_is_lexicographic(self):
        g = grid_graph(3, 2)
        for u, v in g.edges:
            assert u < v


class TestDivergenceGradient:
    def test_chain_sign_convention(self):
        g = chain_graph(2)
        c = np.array([[2.0, -1.0]])
        div = divergence(g, c)
        np.testing.assert_allclose(div[0], -c[0])
        np.testing.assert_allclose(div[1], c[0])

    def test_zero_field(self):
        g = grid_graph(3, 3)
        np.testing.assert_array_equal(divergence(g, np.zeros((g.num_edges, 2, 3))), np.zeros((9, 2, 3)))

    def test_gradient_of_chain(self):
        g = chain_graph(2)
        y = np.array([[1.0, 2.0], [3.0, -1.0]])
        np.testing.assert_allclose(gradient(g, y)[0], y[0] - y[1])

    def test_constant_field_in_kernel(self):
        g = grid_graph(4, 3)
        y = np.ones((g.num_vertices, 5))
        np.testing.assert_allclose(gradient(g, y), 0.0, atol=1e-15)

    def test_divergence_telescopes(self):
        rng = np.random.default_rng(0)
        g = grid_graph(4, 4)
        p = rng.standard_normal((g.num_edges, 3))
        np.testing.assert_allclose(divergence(g, p).sum(axis=0), 0.0, atol=1e-12)

    def test_adjointness(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            w = int(rng.integers(1, 5))
            h = int(rng.integers(1, 5))
            g = grid_graph(w, h)
            if g.num_edges == 0:
                continue
            p = rng.standard_normal((g.num_edges, 2, 3))
            y = rng.standard_normal((g.num_vertices, 2, 3))
            lhs = float(np.sum(divergence(g, p) * y))
            rhs = float(np.sum(p * gradient(g, y)))
            assert lhs + rhs == pytest.approx(0.0, abs=1e-10)

    def test_shape_mismatch(self):
        g = chain_graph(3)
        with pytest.raises(ShapeMismatch):
            divergence(g, np.zeros((5, 2)))
        with pytest.raises(ShapeMismatch):
            gradient(g, np.zeros((7, 2)))


class TestOperatorNorm:
    def test_single_edge(self):
        est = operator_norm_estimate(chain_graph(2))
        assert est == pytest.approx(math.sqrt(2), rel=0.011)

    def test_chain_bound(self):
        assert operator_norm_estimate(chain_graph(8)) <= 2.0

    def test_grid_against_laplacian_spectrum(self):
        est = operator_norm_estimate(grid_graph(16, 16))
        lam_max = 8 * math.sin(15 * math.pi / 32) ** 2
        assert est == pytest.approx(math.sqrt(lam_max), rel=0.01)

    def test_edgeless(self):
        assert operator_norm_estimate(Graph(3, [])) == 0.0
