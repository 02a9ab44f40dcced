from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from crossfit.basis import BasisSpec, build_basis
from crossfit.errors import EmptySampleError, NotSymmetricError, ShapeError
from crossfit.linreg import (
    SeriesFunction,
    fit_regression,
    fit_regression_design,
    fit_riesz,
    fit_riesz_design,
    gram,
    pinv_psd,
)

CONST = build_basis(BasisSpec(1, 0, 1))
HAAR2 = build_basis(BasisSpec(1, 0, 2))


def random_psd(rng, K, rank=None):
    rank = K if rank is None else rank
    B = rng.normal(size=(K, rank))
    return B @ B.T


class TestGram:
    def test_constant_basis(self):
        g = gram(CONST, [0.1, 0.5, 0.9])
        np.testing.assert_array_equal(g.matrix, [[1.0]])
        assert g.rank == 1 and g.nonsingular_flag

    def test_haar_one_point_per_cell(self):
        g = gram(HAAR2, [0.25, 0.75])
        np.testing.assert_array_equal(g.matrix, np.diag([0.5, 0.5]))
        assert g.nonsingular_flag and g.unsupported == 0

    def test_haar_empty_cell(self):
        g = gram(HAAR2, [0.25, 0.3])
        np.testing.assert_array_equal(g.matrix, np.diag([1.0, 0.0]))
        assert not g.nonsingular_flag
        assert g.rank == 1 and g.unsupported == 1

    def test_empty_sample(self):
        with pytest.raises(EmptySampleError):
            gram(HAAR2, np.empty((0, 1)))

    def test_theory_gate_is_diagnostic(self):
        g = gram(build_basis(BasisSpec(1, 0, 2, "uniform_design")), [0.25, 0.75])
        assert g.theory_gate and g.min_eig == pytest.approx(1.0)
        assert not gram(HAAR2, [0.25, 0.75]).theory_gate

    def test_symmetric_psd(self):
        rng = np.random.default_rng(4)
        g = gram(build_basis(BasisSpec(2, 2, 2)), rng.random((30, 2)))
        assert np.max(np.abs(g.matrix - g.matrix.T)) <= 1e-12
        assert np.min(np.linalg.eigvalsh(g.matrix)) >= -1e-10


class TestPinv:
    def test_identity(self):
        np.testing.assert_allclose(pinv_psd(np.eye(3)), np.eye(3), atol=1e-15)

    def test_diag_with_zero(self):
        np.testing.assert_allclose(pinv_psd(np.diag([4.0, 0.0])), np.diag([0.25, 0.0]))

    def test_rank_one(self):
        np.testing.assert_allclose(pinv_psd(np.ones((2, 2))), np.full((2, 2), 0.25), atol=1e-15)

    def test_rejects_asymmetric(self):
        with pytest.raises(NotSymmetricError):
            pinv_psd(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_rejects_nonsquare(self):
        with pytest.raises(NotSymmetricError):
            pinv_psd(np.ones((2, 3)))

    def test_zero_matrix(self):
        np.testing.assert_array_equal(pinv_psd(np.zeros((3, 3))), np.zeros((3, 3)))

    @pytest.mark.parametrize("seed", range(10))
    def test_penrose_laws(self, seed):
        rng = np.random.default_rng(seed)
        K = int(rng.integers(1, 31))
        A = random_psd(rng, K, int(rng.integers(1, K + 1)))
        G = pinv_psd(A)
        assert np.max(np.abs(A @ G @ A - A)) <= 1e-9 * max(1.0, np.abs(A).max())
        assert np.max(np.abs(G @ A @ G - G)) <= 1e-9 * max(1.0, np.abs(G).max())

    def test_matches_svd_pinv(self):
        rng = np.random.default_rng(11)
        A = random_psd(rng, 6, 4)
        np.testing.assert_allclose(pinv_psd(A), np.linalg.pinv(A, hermitian=True), atol=1e-10)


class TestRegression:
    def test_constant_basis_mean(self):
        np.testing.assert_allclose(fit_regression(CONST, [0.1, 0.5, 0.9], [1, 2, 3]).coeffs, [2.0])

    def test_haar_cell_means(self):
        fit = fit_regression(HAAR2, [0.2, 0.3, 0.7], [1, 3, 5])
        np.testing.assert_allclose(fit.coeffs, [2.0, 5.0], atol=1e-14)

    def test_empty_cell_predicts_zero(self):
        fit = fit_regression(build_basis(BasisSpec(1, 0, 4)), [0.1, 0.2, 0.9], [1, 2, 7])
        np.testing.assert_allclose(fit.coeffs, [1.5, 0, 0, 7], atol=1e-14)
        assert fit.gram.unsupported == 2 and not fit.gram.nonsingular_flag
        np.testing.assert_allclose(fit([0.3, 0.6]), [0.0, 0.0])

    def test_interpolates_span_member(self):
        rng = np.random.default_rng(2)
        b = build_basis(BasisSpec(1, 2, 3))
        c = rng.normal(size=b.K)
        x = rng.random(40)
        fit = fit_regression(b, x, b.evaluate(x) @ c)
        np.testing.assert_allclose(fit.coeffs, c, atol=1e-10)

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            fit_regression(HAAR2, [0.1, 0.2], [1.0])

    def test_coefficients_in_row_space(self):
        rng = np.random.default_rng(6)
        b = build_basis(BasisSpec(1, 0, 6))
        x = rng.random(5) * 0.5          # leaves upper cells empty
        fit = fit_regression(b, x, rng.normal(size=5))
        S = fit.gram.matrix
        resid = fit.coeffs - S @ pinv_psd(S) @ fit.coeffs
        assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(fit.coeffs)

    @pytest.mark.parametrize("spec", [BasisSpec(1, 1, 4), BasisSpec(2, 1, 2), BasisSpec(1, 3, 3)])
    def test_training_residuals_orthogonal(self, spec):
        rng = np.random.default_rng(spec.K)
        b = build_basis(spec)
        x = rng.random((60, spec.r))
        y = rng.normal(size=60)
        fit = fit_regression(b, x, y)
        assert fit.gram.nonsingular_flag
        P = b.evaluate(x)
        assert np.max(np.abs(P.T @ (y - P @ fit.coeffs))) <= 1e-9 * 60

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_reparametrization_invariance(self, seed):
        rng = np.random.default_rng(seed)
        b = build_basis(BasisSpec(1, 2, 3))
        x = rng.random(50)
        y = rng.normal(size=50)
        M = rng.normal(size=(b.K, b.K)) + 3 * np.eye(b.K)
        if np.linalg.cond(M) > 1e4:
            M = np.eye(b.K) + 0.1 * M
        bm = b.with_transform(M)
        f1 = fit_regression(b, x, y)
        f2 = fit_regression(bm, x, y)
        np.testing.assert_allclose(f1(x), f2(x), atol=1e-8)

    def test_vector_response(self):
        rng = np.random.default_rng(1)
        P = rng.random((20, 3))
        Y = rng.normal(size=(20, 2))
        fit = fit_regression_design(P, Y)
        assert fit.coeffs.shape == (3, 2)
        np.testing.assert_allclose(fit.coeffs[:, 1], fit_regression_design(P, Y[:, 1]).coeffs)

    def test_predict_without_basis(self):
        fit = fit_regression_design(np.ones((3, 1)), [1.0, 2.0, 3.0])
        with pytest.raises(ShapeError):
            fit([0.5])
        np.testing.assert_allclose(fit.predict_design(np.ones((2, 1))), [2.0, 2.0])

    @settings(max_examples=50, deadline=None)
    @given(
        P=arrays(np.float64, (12, 3), elements=st.floats(-3, 3)),
        y=arrays(np.float64, 12, elements=st.floats(-3, 3)),
    )
    def test_normal_equations_on_range(self, P, y):
        fit = fit_regression_design(P, y)
        S, h = P.T @ P / 12, P.T @ y / 12
        proj = S @ pinv_psd(S)
        np.testing.assert_allclose(S @ fit.coeffs, proj @ h, atol=1e-8 * (1 + np.abs(h).max()))


class TestRiesz:
    def test_ecc_hand_example(self):
        a = np.array([1.0, 3.0])
        x = np.array([0.2, 0.8])
        V = -a[:, None] * HAAR2.evaluate(x)
        np.testing.assert_allclose(V.mean(axis=0), [-0.5, -1.5])
        fit = fit_riesz(HAAR2, V, x)
        np.testing.assert_allclose(fit.gram.matrix, np.diag([0.5, 0.5]))
        np.testing.assert_allclose(fit.coeffs, [-1.0, -3.0])
        assert fit.target == "riesz"

    def test_zero_v(self):
        fit = fit_riesz(HAAR2, np.zeros((3, 2)), [0.1, 0.6, 0.9])
        np.testing.assert_array_equal(fit.coeffs, [0.0, 0.0])

    def test_missing_data_normal_equation(self):
        rng = np.random.default_rng(3)
        b = build_basis(BasisSpec(1, 1, 3))
        w = rng.random(40)
        a = (rng.random(40) < 0.6).astype(float)
        Q = b.evaluate(w)
        fit = fit_riesz_design(a[:, None] * Q, Q)
        S = fit.gram.matrix
        h = Q.mean(axis=0)
        np.testing.assert_allclose(S @ fit.coeffs, S @ pinv_psd(S) @ h, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            fit_riesz(HAAR2, np.zeros((2, 3)), [0.1, 0.2])

    def test_empty(self):
        with pytest.raises(EmptySampleError):
            fit_riesz_design(np.ones((2, 1)), np.empty((0, 1)))

    def test_ecc_riesz_is_negative_regression_of_a(self):
        rng = np.random.default_rng(8)
        b = build_basis(BasisSpec(1, 2, 4))
        x = rng.random(30)
        a = rng.normal(size=30)
        P = b.evaluate(x)
        riesz = fit_riesz_design(P, -a[:, None] * P)
        reg = fit_regression_design(P, a)
        np.testing.assert_allclose(riesz.coeffs, -reg.coeffs, atol=1e-12)


def test_series_function_unit():
    b = build_basis(BasisSpec(1, 1, 2))
    f = SeriesFunction.unit(b, 1)
    x = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(f(x), b.evaluate(x)[:, 1])
