"""
Tensor-product b-spline dictionaries on the unit cube.

A basis of order ``kappa`` (polynomial degree; ``kappa=0`` is the Haar
basis of cell indicators) uses ``cells_per_dim`` equal-width knot intervals
in each of ``r`` coordinates, with clamped boundary knots. Each coordinate
contributes ``J = cells_per_dim + kappa`` univariate functions and the full
dictionary has ``K = J**r`` tensor products, ordered with the first
coordinate varying slowest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError, InvalidSpecError, ShapeError

NORMALIZATIONS = ("none", "uniform_design")

# rows per block when evaluating the basis on large quadrature grids
_EVAL_CHUNK = 8192


@dataclass(frozen=True)
class BasisSpec:
    r: int
    kappa: int
    cells_per_dim: int
    normalization: str = "none"

    @property
    def per_dim(self) -> int:
        return self.cells_per_dim + self.kappa

    @property
    def K(self) -> int:
        return self.per_dim**self.r

    def validate(self) -> None:
        if not isinstance(self.r, (int, np.integer)) or self.r < 1:
            raise InvalidSpecError(f"r must be a positive integer, got {self.r!r}")
        if not isinstance(self.kappa, (int, np.integer)) or self.kappa < 0:
            raise InvalidSpecError(f"kappa must be a non-negative integer, got {self.kappa!r}")
        if not isinstance(self.cells_per_dim, (int, np.integer)) or self.cells_per_dim < 1:
            raise InvalidSpecError(
                f"cells_per_dim must be a positive integer, got {self.cells_per_dim!r}"
            )
        if self.normalization not in NORMALIZATIONS:
            raise InvalidSpecError(
                f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}"
            )

    def to_dict(self) -> dict:
        return {
            "r": int(self.r),
            "kappa": int(self.kappa),
            "cells_per_dim": int(self.cells_per_dim),
            "normalization": self.normalization,
            "K": int(self.K),
        }


def clamped_knots(cells: int, kappa: int) -> NDArray[np.float64]:
    """Evenly spaced interior knots with ``kappa``-fold repeated ends."""
    inner = np.linspace(0.0, 1.0, cells + 1)
    return np.concatenate([np.zeros(kappa), inner, np.ones(kappa)])


def _bspline_1d(x: NDArray[np.float64], knots: NDArray[np.float64], kappa: int, cells: int):
    """Dense (n, cells + kappa) matrix of univariate b-spline values.

    Cox-de Boor recursion restricted to the ``kappa + 1`` functions that are
    nonzero on the cell containing each point. ``x == 1`` falls in the last cell.
    """
    n = x.shape[0]
    cell = np.minimum(np.floor(x * cells).astype(np.int64), cells - 1)
    span = cell + kappa
    N = np.zeros((n, kappa + 1))
    N[:, 0] = 1.0
    left = np.zeros((n, kappa + 1))
    right = np.zeros((n, kappa + 1))
    for d in range(1, kappa + 1):
        left[:, d] = x - knots[span + 1 - d]
        right[:, d] = knots[span + d] - x
        saved = np.zeros(n)
        for j in range(d):
            temp = N[:, j] / (right[:, j + 1] + left[:, d - j])
            N[:, j] = saved + right[:, j + 1] * temp
            saved = left[:, d - j] * temp
        N[:, d] = saved
    out = np.zeros((n, cells + kappa))
    rows = np.arange(n)[:, None]
    out[rows, cell[:, None] + np.arange(kappa + 1)[None, :]] = N
    return out


@dataclass(frozen=True)
class Basis:
    """Evaluable dictionary p(x).

    ``transform`` optionally replaces p(x) by ``transform @ p(x)``; it exists
    so that reparametrization behaviour can be exercised without touching the
    spline code.
    """

    spec: BasisSpec
    knots: tuple[NDArray[np.float64], ...] = field(repr=False)
    transform: NDArray[np.float64] | None = field(default=None, repr=False, compare=False)

    @property
    def K(self) -> int:
        if self.transform is not None:
            return int(self.transform.shape[0])
        return self.spec.K

    @property
    def r(self) -> int:
        return self.spec.r

    @property
    def scale(self) -> float:
        if self.spec.normalization == "uniform_design":
            return float(self.spec.cells_per_dim) ** (self.spec.r / 2.0)
        return 1.0

    def with_transform(self, M: ArrayLike) -> "Basis":
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[1] != self.spec.K:
            raise ShapeError(f"transform must have {self.spec.K} columns, got shape {M.shape}")
        base = M if self.transform is None else M @ self.transform
        return Basis(self.spec, self.knots, base)

    def check_points(self, x: ArrayLike) -> NDArray[np.float64]:
        """Coerce to an (n, r) float array and enforce the unit-cube domain."""
        X = np.asarray(x, dtype=float)
        if X.ndim == 0:
            X = X.reshape(1, 1)
        elif X.ndim == 1:
            X = X.reshape(-1, 1) if self.r == 1 else X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.r:
            raise ShapeError(f"points must have {self.r} coordinates, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DomainError("points contain NaN or infinite coordinates")
        bad = (X < 0.0) | (X > 1.0)
        if np.any(bad):
            i = int(np.argwhere(bad)[0][0])
            raise DomainError(
                f"point {i} has a coordinate outside [0, 1]: {X[i].tolist()}", row=i
            )
        return X

    def evaluate(self, x: ArrayLike) -> NDArray[np.float64]:
        """Design matrix with one row p(x_i) per point."""
        X = self.check_points(x)
        return self._evaluate_unchecked(X)

    def _evaluate_unchecked(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        spec = self.spec
        n = X.shape[0]
        P = np.ones((n, 1))
        for d in range(spec.r):
            B = _bspline_1d(X[:, d], self.knots[d], spec.kappa, spec.cells_per_dim)
            P = (P[:, :, None] * B[:, None, :]).reshape(n, -1)
        if spec.normalization == "uniform_design":
            P *= self.scale
        if self.transform is not None:
            P = P @ self.transform.T
        return P

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.evaluate(x)


def build_basis(spec: BasisSpec) -> Basis:
    spec.validate()
    knots = tuple(clamped_knots(spec.cells_per_dim, spec.kappa) for _ in range(spec.r))
    return Basis(spec, knots)


def eval_basis(basis: Basis, x: ArrayLike) -> NDArray[np.float64]:
    """p(x) for a single point, as a length-K vector."""
    X = basis.check_points(x)
    if X.shape[0] != 1:
        raise ShapeError("eval_basis takes a single point; use Basis.evaluate for batches")
    return basis._evaluate_unchecked(X)[0]


def gauss_legendre_grid(
    basis: Basis, nodes_per_cell: int | None = None
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Composite Gauss-Legendre nodes and weights over the knot cells of ``basis``.

    Returns ``(X, w)`` with ``X`` of shape (m, r). The default rule uses
    ``kappa + 2`` nodes per cell per coordinate.
    """
    spec = basis.spec
    m = spec.kappa + 2 if nodes_per_cell is None else int(nodes_per_cell)
    if m < 1:
        raise InvalidSpecError("nodes_per_cell must be at least 1")
    return composite_gauss_legendre(spec.cells_per_dim, m, spec.r)


def composite_gauss_legendre(cells: int, nodes: int, r: int):
    g, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, 1.0, cells + 1)
    h = np.diff(edges)
    x1 = (edges[:-1, None] + 0.5 * h[:, None] * (g[None, :] + 1.0)).ravel()
    w1 = (0.5 * h[:, None] * gw[None, :]).ravel()
    if r == 1:
        return x1[:, None], w1
    grids = np.meshgrid(*([x1] * r), indexing="ij")
    wgrids = np.meshgrid(*([w1] * r), indexing="ij")
    X = np.stack([gr.ravel() for gr in grids], axis=1)
    w = np.prod(np.stack([wg.ravel() for wg in wgrids], axis=1), axis=1)
    return X, w


def integrate_weighted(
    basis: Basis,
    omega: Callable[[NDArray[np.float64]], ArrayLike],
    nodes_per_cell: int | None = None,
) -> NDArray[np.float64]:
    """v = integral over [0,1]^r of omega(x) p(x) dx.

    ``omega`` receives an (m, r) array and returns m values.
    """
    X, w = gauss_legendre_grid(basis, nodes_per_cell)
    v = np.zeros(basis.K)
    for start in range(0, X.shape[0], _EVAL_CHUNK):
        Xc = X[start : start + _EVAL_CHUNK]
        om = np.asarray(omega(Xc), dtype=float).reshape(-1)
        if om.shape[0] != Xc.shape[0]:
            raise ShapeError("omega must return one value per quadrature node")
        v += basis._evaluate_unchecked(Xc).T @ (w[start : start + _EVAL_CHUNK] * om)
    return v
