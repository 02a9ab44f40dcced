from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.interpolate import BSpline

from crossfit.basis import (
    BasisSpec,
    build_basis,
    clamped_knots,
    eval_basis,
    gauss_legendre_grid,
    integrate_weighted,
)
from crossfit.errors import DomainError, InvalidSpecError, ShapeError


def haar(cells=2, norm="none", r=1):
    return build_basis(BasisSpec(r, 0, cells, norm))


class TestBuild:
    @pytest.mark.parametrize(
        "r,kappa,cells,K",
        [(1, 0, 2, 2), (2, 0, 2, 4), (1, 1, 3, 4), (2, 2, 3, 25), (3, 1, 1, 8)],
    )
    def test_size(self, r, kappa, cells, K):
        b = build_basis(BasisSpec(r, kappa, cells))
        assert b.K == K
        assert b.evaluate(np.full((1, r), 0.3)).shape == (1, K)

    @pytest.mark.parametrize("spec", [BasisSpec(0, 0, 2), BasisSpec(1, 0, 0), BasisSpec(1, -1, 2),
                                      BasisSpec(1, 0, 2, "unit")])
    def test_invalid(self, spec):
        with pytest.raises(InvalidSpecError):
            build_basis(spec)

    def test_knots_clamped(self):
        np.testing.assert_allclose(clamped_knots(3, 2), [0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1])

    def test_deterministic(self):
        x = np.random.default_rng(1).random((20, 2))
        a = build_basis(BasisSpec(2, 2, 3)).evaluate(x)
        b = build_basis(BasisSpec(2, 2, 3)).evaluate(x)
        assert np.array_equal(a, b)


class TestEvaluate:
    def test_haar_supports(self):
        b = haar()
        np.testing.assert_array_equal(b.evaluate([0.0, 0.25, 0.4999, 0.5, 0.75, 1.0]),
                                      [[1, 0], [1, 0], [1, 0], [0, 1], [0, 1], [0, 1]])

    def test_haar_point(self):
        np.testing.assert_array_equal(eval_basis(haar(), 0.25), [1.0, 0.0])

    def test_uniform_design_scale(self):
        np.testing.assert_allclose(eval_basis(haar(norm="uniform_design"), 0.75), [0.0, np.sqrt(2)])

    def test_right_endpoint_in_last_cell(self):
        b = build_basis(BasisSpec(1, 2, 4))
        p = eval_basis(b, 1.0)
        assert p[-1] == pytest.approx(1.0)
        assert np.count_nonzero(p) == 1

    @pytest.mark.parametrize("x", [-0.01, 1.0000001, np.nan, np.inf])
    def test_outside_domain_raises(self, x):
        with pytest.raises(DomainError):
            eval_basis(haar(), x)

    def test_no_clamping_in_batch(self):
        with pytest.raises(DomainError) as info:
            build_basis(BasisSpec(2, 1, 2)).evaluate([[0.1, 0.2], [0.3, 1.5]])
        assert info.value.details["row"] == 1

    def test_wrong_dimension(self):
        with pytest.raises(ShapeError):
            build_basis(BasisSpec(2, 1, 2)).evaluate(np.zeros((3, 3)))

    def test_eval_basis_rejects_batch(self):
        with pytest.raises(ShapeError):
            eval_basis(haar(), [0.1, 0.2])

    def test_tensor_order_first_coordinate_slowest(self):
        b = haar(r=2)
        # cell (x1 in right half, x2 in left half) is index 1 * 2 + 0
        np.testing.assert_array_equal(eval_basis(b, [0.7, 0.2]), [0, 0, 1, 0])

    @pytest.mark.parametrize("kappa,cells", [(0, 5), (1, 3), (2, 4), (3, 6)])
    def test_matches_scipy_bspline(self, kappa, cells):
        b = build_basis(BasisSpec(1, kappa, cells))
        # off-knot grid: at a knot the half-open convention is rounding sensitive
        x = (np.arange(240) + 0.5) / 240
        t = clamped_knots(cells, kappa)
        P = b.evaluate(x)
        for k in range(b.K):
            c = np.zeros(b.K)
            c[k] = 1.0
            ref = BSpline(t, c, kappa, extrapolate=False)(x)
            np.testing.assert_allclose(P[:, k], ref, atol=1e-12)

    def test_partition_of_unity(self):
        rng = np.random.default_rng(0)
        for spec in (BasisSpec(1, 1, 3), BasisSpec(1, 3, 7), BasisSpec(2, 2, 3), BasisSpec(3, 1, 2)):
            P = build_basis(spec).evaluate(rng.random((10_000, spec.r)))
            assert np.max(np.abs(P.sum(axis=1) - 1.0)) <= 1e-12

    @settings(max_examples=40, deadline=None)
    @given(
        kappa=st.integers(0, 3),
        cells=st.integers(1, 6),
        r=st.integers(1, 3),
        pts=st.lists(st.floats(0, 1), min_size=3, max_size=3),
    )
    def test_local_support(self, kappa, cells, r, pts):
        b = build_basis(BasisSpec(r, kappa, cells))
        p = eval_basis(b, pts[:r])
        assert np.count_nonzero(p) <= (kappa + 1) ** r
        assert np.all(p >= 0)

    def test_uniform_design_gram_near_identity(self):
        b = haar(norm="uniform_design")
        P = b.evaluate(np.random.default_rng(3).random(100_000))
        S = P.T @ P / P.shape[0]
        assert np.max(np.abs(S - np.eye(2))) <= 0.1

    def test_transform(self):
        b = build_basis(BasisSpec(1, 1, 2))
        M = np.array([[1.0, 1, 0], [0, 2, 0], [0, 0, 3]])
        x = np.array([0.1, 0.6])
        np.testing.assert_allclose(b.with_transform(M).evaluate(x), b.evaluate(x) @ M.T)
        with pytest.raises(ShapeError):
            b.with_transform(np.eye(2))


class TestIntegrateWeighted:
    def test_constant_weight_haar(self):
        np.testing.assert_allclose(integrate_weighted(haar(), lambda X: np.ones(len(X))), [0.5, 0.5])

    def test_bump_constant_basis(self):
        v = integrate_weighted(build_basis(BasisSpec(1, 0, 1)), lambda X: 6 * X[:, 0] * (1 - X[:, 0]))
        np.testing.assert_allclose(v, [1.0], atol=1e-14)

    def test_bump_haar_symmetric(self):
        v = integrate_weighted(haar(), lambda X: 6 * X[:, 0] * (1 - X[:, 0]))
        np.testing.assert_allclose(v, [0.5, 0.5], atol=1e-14)

    def test_default_nodes(self):
        X, w = gauss_legendre_grid(build_basis(BasisSpec(2, 1, 3)))
        assert X.shape == ((3 * 3) ** 2, 2)
        assert w.sum() == pytest.approx(1.0)

    def test_bad_omega_shape(self):
        with pytest.raises(ShapeError):
            integrate_weighted(haar(), lambda X: np.ones(3))

    @pytest.mark.parametrize("kappa,cells", [(0, 3), (1, 4), (2, 3), (3, 5)])
    def test_exact_for_piecewise_polynomial_weight(self, kappa, cells):
        # weight is a polynomial of degree <= kappa on every knot cell
        rng = np.random.default_rng(kappa * 10 + cells)
        coefs = rng.normal(size=(cells, kappa + 1))

        def omega1(x):
            cell = np.minimum((x * cells).astype(int), cells - 1)
            return np.array([np.polyval(coefs[c], xi) for c, xi in zip(cell, x)])

        b = build_basis(BasisSpec(1, kappa, cells))
        v = integrate_weighted(b, lambda X: omega1(X[:, 0]))
        edges = np.linspace(0, 1, cells + 1)
        for k in range(b.K):
            ref = sum(
                quad(lambda s: omega1(np.array([s]))[0] * b.evaluate(np.array([s]))[0, k],
                     lo, hi, epsabs=1e-14, epsrel=1e-14)[0]
                for lo, hi in zip(edges[:-1], edges[1:])
            )
            assert v[k] == pytest.approx(ref, abs=1e-10)

    def test_tensor_integral_factorizes(self):
        b2 = build_basis(BasisSpec(2, 1, 2))
        b1 = build_basis(BasisSpec(1, 1, 2))
        w = lambda X: np.prod(6 * X * (1 - X), axis=1)
        v1 = integrate_weighted(b1, w)
        np.testing.assert_allclose(integrate_weighted(b2, w), np.kron(v1, v1), atol=1e-14)
