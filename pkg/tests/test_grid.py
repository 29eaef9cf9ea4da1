from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from onsagerflow.errors import NonNeutralSource
from onsagerflow.grid import (
    PeriodicGrid,
    average_to_faces,
    divergence_to_centers,
    gradient_to_faces,
    integrate_cells,
    solve_periodic_poisson,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
grids = st.one_of(
    st.builds(PeriodicGrid, st.just(1), st.integers(2, 12)),
    st.builds(PeriodicGrid, st.just(2), st.tuples(st.integers(2, 6), st.integers(2, 6))),
)


def dense_laplacian_1d(n, h):
    lap = -2 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)
    lap[0, -1] = lap[-1, 0] = 1
    return lap / h**2


class TestGridGeometry:
    def test_spacing_and_centers(self):
        g = PeriodicGrid(1, 4)
        assert g.spacing == (0.25,)
        np.testing.assert_allclose(g.cell_centers()[0], [0.125, 0.375, 0.625, 0.875])
        np.testing.assert_allclose(g.face_centers(0)[0], [0.25, 0.5, 0.75, 1.0])

    def test_side_length(self):
        g = PeriodicGrid(2, 20, side_length=100.0)
        assert g.spacing == (5.0, 5.0)
        assert g.cell_volume == 25.0
        assert g.n == (20, 20)

    @pytest.mark.parametrize("args", [(3, 4), (1, 1), (2, (4,)), (1, 4, 0.0)])
    def test_rejects_bad_grids(self, args):
        with pytest.raises(ValueError):
            PeriodicGrid(*args)


class TestStencils:
    def test_gradient_of_constant_is_zero(self):
        g = PeriodicGrid(2, 5)
        assert np.all(gradient_to_faces(g, np.full(g.n_cells, 3.7)) == 0)

    def test_gradient_alternating(self):
        g = PeriodicGrid(1, 4)
        np.testing.assert_allclose(gradient_to_faces(g, np.array([0.0, 1, 0, 1]))[0], [4, -4, 4, -4])

    def test_gradient_second_order(self):
        errs = []
        for n in (32, 64):
            g = PeriodicGrid(1, n)
            x = g.cell_centers()[0]
            xf = g.face_centers(0)[0]
            d = gradient_to_faces(g, np.sin(2 * np.pi * x))[0]
            errs.append(np.max(np.abs(d - 2 * np.pi * np.cos(2 * np.pi * xf))))
        # h^2 convergence: the error ratio under halving is 4
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)
        assert errs[1] <= 2 * np.pi * (2 * np.pi) ** 2 / 24 * (1 / 64) ** 2 * 1.01

    def test_divergence_hand_example(self):
        g = PeriodicGrid(1, 3)
        np.testing.assert_allclose(divergence_to_centers(g, np.array([[1.0, 0, 0]])), [3, -3, 0], atol=1e-14)

    def test_divergence_of_constant_is_zero(self):
        g = PeriodicGrid(2, (3, 4))
        m = np.stack([np.full(g.n_cells, 2.0), np.full(g.n_cells, -1.0)])
        assert np.all(divergence_to_centers(g, m) == 0)

    def test_divergence_sums_to_zero(self):
        rng = np.random.default_rng(0)
        g = PeriodicGrid(1, 8)
        m = rng.integers(-50, 50, size=(1, 8)).astype(float)
        assert np.sum(divergence_to_centers(g, m)) == 0.0

    def test_average(self):
        g = PeriodicGrid(1, 2)
        np.testing.assert_array_equal(average_to_faces(g, np.array([1.0, 3.0])), [[2.0, 2.0]])
        g2 = PeriodicGrid(2, 3)
        np.testing.assert_array_equal(average_to_faces(g2, np.full(9, 0.7)), np.full((2, 9), 0.7))

    def test_integrate(self):
        g = PeriodicGrid(1, 4)
        assert integrate_cells(g, np.ones(4)) == pytest.approx(1.0, abs=1e-15)
        assert integrate_cells(g, np.zeros(4)) == 0.0
        assert integrate_cells(g, g.cell_centers()[0]) == pytest.approx(0.5, abs=1e-15)

    def test_matrices_match_stencils(self):
        rng = np.random.default_rng(1)
        g = PeriodicGrid(2, (4, 5))
        u = rng.normal(size=g.n_cells)
        m = rng.normal(size=(2, g.n_cells))
        np.testing.assert_allclose(g.gradient_matrix @ u, g.gradient(u).ravel(), atol=1e-13)
        np.testing.assert_allclose(g.divergence_matrix @ m.ravel(), g.divergence(m), atol=1e-13)
        np.testing.assert_allclose(g.average_matrix @ u, g.average(u).ravel(), atol=1e-15)
        np.testing.assert_allclose(g.laplacian_matrix @ u, g.laplacian(u), atol=1e-12)
        np.testing.assert_allclose(g.face_to_cell_matrix @ m.ravel(), g.face_to_cell_average(m).ravel(), atol=1e-15)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(grids, st.data())
    def test_summation_by_parts(self, g, data):
        u = data.draw(arrays(float, g.n_cells, elements=finite))
        m = data.draw(arrays(float, (g.dim, g.n_cells), elements=finite))
        lhs = g.cell_volume * np.sum(g.gradient(u) * m)
        rhs = -g.cell_volume * np.sum(u * g.divergence(m))
        scale = g.cell_volume * np.sum(np.abs(g.gradient(u) * m)) + 1e-300
        assert abs(lhs - rhs) <= 1e-13 * max(scale, 1.0)

    @settings(max_examples=40, deadline=None)
    @given(grids, st.data())
    def test_div_grad_sums_to_zero(self, g, data):
        u = data.draw(arrays(float, g.n_cells, elements=st.integers(-100, 100).map(float)))
        # integer data keeps every stencil value exact, so the telescoping sum is exactly zero
        assert np.sum(g.divergence(g.gradient(u))) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(grids, st.data(), finite, finite)
    def test_linearity(self, g, data, a, b):
        u = data.draw(arrays(float, g.n_cells, elements=finite))
        v = data.draw(arrays(float, g.n_cells, elements=finite))
        for op in (g.gradient, g.average):
            lhs = op(a * u + b * v)
            rhs = a * op(u) + b * op(v)
            scale = np.max(np.abs(a * op(u))) + np.max(np.abs(b * op(v))) + 1.0
            assert np.max(np.abs(lhs - rhs)) <= 1e-13 * scale

    @settings(max_examples=30, deadline=None)
    @given(grids, finite)
    def test_constants(self, g, c):
        u = np.full(g.n_cells, c)
        assert np.all(g.gradient(u) == 0)
        np.testing.assert_allclose(g.average(u), c, rtol=1e-15)


class TestPoisson:
    def test_zero_rhs(self):
        g = PeriodicGrid(2, 6)
        assert np.all(solve_periodic_poisson(g, np.zeros(g.n_cells)) == 0)

    def test_sine_mode_against_dense_solve(self):
        g = PeriodicGrid(1, 8)
        h = g.spacing[0]
        rhs = np.sin(2 * np.pi * g.cell_centers()[0])
        phi = solve_periodic_poisson(g, rhs, coeff=1.0)
        # dense oracle: least-squares solve of -L phi = rhs, mean-zero pinned
        lap = dense_laplacian_1d(8, h)
        oracle = np.linalg.lstsq(-lap, rhs, rcond=None)[0]
        oracle -= oracle.mean()
        np.testing.assert_allclose(phi, oracle, atol=1e-12)
        lam1 = 4 / h**2 * np.sin(np.pi * h) ** 2
        np.testing.assert_allclose(phi, rhs / lam1, atol=1e-12)

    def test_coefficient_scaling_2d(self):
        g = PeriodicGrid(2, (6, 4))
        rng = np.random.default_rng(3)
        rhs = rng.normal(size=g.n_cells)
        rhs -= rhs.mean()
        phi = solve_periodic_poisson(g, rhs, coeff=2.5)
        np.testing.assert_allclose(-2.5 * g.laplacian(phi), rhs, atol=1e-10 * np.max(np.abs(rhs)))
        assert abs(phi.mean()) <= 1e-12
        np.testing.assert_array_equal(phi, solve_periodic_poisson(g, rhs, coeff=2.5))

    def test_non_neutral(self):
        g = PeriodicGrid(1, 8)
        with pytest.raises(NonNeutralSource):
            solve_periodic_poisson(g, 0.1 + np.sin(2 * np.pi * g.cell_centers()[0]))
