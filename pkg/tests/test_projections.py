import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from volmf.errors import DimensionMismatch, InvalidBounds, InputError
from volmf.projections import (
    Bounds, project_box_columns, project_nonneg, project_simplex_columns, simplex_threshold,
    simplex_threshold_sorted,
)
from oracles import simplex_projection_bruteforce, threshold_bisection

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
matrices = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=finite)


class TestSimplex:
    def test_feasible_column(self):
        np.testing.assert_array_equal(project_simplex_columns(np.array([[1.0], [0.0], [0.0]])).ravel(), [1, 0, 0])

    def test_centroid(self):
        np.testing.assert_allclose(project_simplex_columns(np.full(3, 0.5)), np.full(3, 1 / 3), rtol=1e-15)

    def test_two_vector(self):
        np.testing.assert_allclose(project_simplex_columns(np.array([2.0, -1.0])), [1.0, 0.0])
        np.testing.assert_allclose(simplex_projection_bruteforce([2.0, -1.0]), [1.0, 0.0])

    def test_scaled(self):
        y = project_simplex_columns(np.array([3.0, 1.0, 0.0]), scale=2.0)
        np.testing.assert_allclose(y, [2.0, 0.0, 0.0])

    def test_bad_scale(self):
        with pytest.raises(InputError):
            project_simplex_columns(np.ones(3), scale=0.0)

    @pytest.mark.parametrize("r", [3, 4])
    def test_matches_bruteforce(self, r):
        rng = np.random.default_rng(r)
        A = rng.standard_normal((r, 200)) * rng.uniform(0.1, 5, size=200)
        Y = project_simplex_columns(A)
        for j in range(A.shape[1]):
            np.testing.assert_allclose(Y[:, j], simplex_projection_bruteforce(A[:, j]), atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(matrices)
    def test_feasible_output(self, A):
        Y = project_simplex_columns(A)
        assert np.all(Y >= 0)
        np.testing.assert_allclose(Y.sum(axis=0), 1.0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(matrices)
    def test_idempotent(self, A):
        Y = project_simplex_columns(A)
        np.testing.assert_array_equal(project_simplex_columns(Y), Y)

    @settings(max_examples=100, deadline=None)
    @given(matrices, st.floats(-50, 50))
    def test_translation(self, A, c):
        np.testing.assert_allclose(project_simplex_columns(A + c), project_simplex_columns(A), atol=1e-12)


class TestThreshold:
    def test_no_clipping(self):
        assert simplex_threshold([1.0, 0.0, 0.0], 1.0) == 0.0

    def test_symmetric(self):
        assert simplex_threshold([2.0, 2.0], 2.0) == 1.0

    def test_bisection_case(self):
        # bisection on g(nu) = sum(max(q - nu, 0)) gives nu = 2 for q = (3, 1, 0)
        assert threshold_bisection([3.0, 1.0, 0.0]) == pytest.approx(2.0, abs=1e-12)
        assert simplex_threshold([3.0, 1.0, 0.0], 1.0) == 2.0

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 8), elements=finite), st.floats(0.01, 100))
    def test_consistency(self, q, s):
        nu = simplex_threshold(q, s)
        assert np.maximum(q - nu, 0).sum() == pytest.approx(s, rel=1e-12, abs=1e-12 * np.abs(q).max())

    def test_sorted_variant_columns(self):
        rng = np.random.default_rng(0)
        Q = -np.sort(-rng.standard_normal((5, 7)), axis=0)
        s = rng.uniform(0.5, 2, 7)
        nu = simplex_threshold_sorted(Q, s)
        np.testing.assert_allclose(np.maximum(Q - nu, 0).sum(axis=0), s, rtol=1e-12)


class TestBox:
    def test_inside(self):
        A = np.array([[1.0, 2.0], [0.5, 3.0]])
        np.testing.assert_array_equal(project_box_columns(A, Bounds.scalar(0, 3, 2)), A)

    def test_clamp(self):
        A = np.array([[7.0], [-2.0]])
        np.testing.assert_array_equal(project_box_columns(A, Bounds.scalar(0, 3, 2)), [[3.0], [0.0]])

    def test_unbounded_side(self):
        b = Bounds(np.zeros(2), np.full(2, np.inf))
        np.testing.assert_array_equal(project_box_columns(np.array([[5.0], [-1.0]]), b), [[5.0], [0.0]])

    def test_sentinel_is_infinite(self):
        big = np.finfo(np.float64).max
        b = Bounds([-big, 0.0], [big, 1.0])
        assert np.isneginf(b.a[0]) and np.isposinf(b.b[0])

    def test_dimension(self):
        with pytest.raises(DimensionMismatch):
            project_box_columns(np.ones((3, 2)), Bounds.scalar(0, 1, 2))

    def test_invalid(self):
        with pytest.raises(InvalidBounds):
            Bounds([1.0], [0.0])

    @settings(max_examples=50, deadline=None)
    @given(matrices)
    def test_idempotent(self, A):
        b = Bounds(np.full(A.shape[0], -1.0), np.full(A.shape[0], 2.0))
        Y = project_box_columns(A, b)
        np.testing.assert_array_equal(project_box_columns(Y, b), Y)

    def test_from_data_masked(self):
        X = np.array([[1.0, 9.0, 3.0]])
        b = Bounds.from_data(X, np.array([[1, 0, 1]]))
        assert (b.a[0], b.b[0]) == (1.0, 3.0)

    def test_shift(self):
        b = Bounds.scalar(0, 3, 2).shifted([1.0, -1.0])
        np.testing.assert_array_equal(b.a, [-1.0, 1.0])
        np.testing.assert_array_equal(b.b, [2.0, 4.0])


class TestNonneg:
    def test_cases(self):
        np.testing.assert_array_equal(project_nonneg(np.array([1.0, 2.0])), [1.0, 2.0])
        np.testing.assert_array_equal(project_nonneg(np.array([-1.0, 2.0])), [0.0, 2.0])
        np.testing.assert_array_equal(project_nonneg(-np.ones((2, 2))), np.zeros((2, 2)))

    @settings(max_examples=50, deadline=None)
    @given(matrices)
    def test_idempotent(self, A):
        Y = project_nonneg(A)
        np.testing.assert_array_equal(project_nonneg(Y), Y)
