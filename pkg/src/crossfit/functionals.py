"""Average linear functionals of a conditional expectation.

Each functional is an affine map ``gamma -> m(z, gamma)``. For a series
function ``gamma = p' delta`` this is ``m(z, 0) + v(z)' delta``, so every
estimator only needs three per-observation ingredients:

* the design row ``p(x_i)`` used for both nuisance regressions,
* the basis action ``v(z_i)`` (components ``m(z, p_k) - m(z, 0)``),
* the offset ``m(z_i, 0)``.

Conventions per kind:

``ecc``
    expected conditional covariance, ``m = a (y - gamma(x))``.
``missing_data_mean``
    ``x = (a, w)`` with ``a`` the observation indicator and ``y = a Y``.
    Only the ``a = 1`` block of the stacked basis is used, so the design
    row is ``a q(w)`` and nuisance callables are functions of ``w`` giving
    ``gamma(1, w)`` and the inverse propensity ``1 / pi(w)``.
``weighted_avg_derivative``
    ``m(gamma) = integral of omega(x) gamma(x) dx`` where ``omega`` is minus
    the first-coordinate derivative of a weight that vanishes on the
    boundary of the unit cube.
``partially_linear_projection``
    handled by its own estimator; ``m`` and ``v`` are not defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .basis import Basis, composite_gauss_legendre, integrate_weighted
from .errors import DataError, DomainError, InvalidSpecError, ShapeError, UnsupportedError


class FunctionalKind(str, Enum):
    ECC = "ecc"
    MISSING_DATA_MEAN = "missing_data_mean"
    WEIGHTED_AVG_DERIVATIVE = "weighted_avg_derivative"
    PARTIALLY_LINEAR_PROJECTION = "partially_linear_projection"

    @classmethod
    def parse(cls, name: "str | FunctionalKind") -> "FunctionalKind":
        if isinstance(name, cls):
            return name
        key = str(name).lower()
        aliases = {"mdm": cls.MISSING_DATA_MEAN, "md": cls.MISSING_DATA_MEAN,
                   "wad": cls.WEIGHTED_AVG_DERIVATIVE, "ad": cls.WEIGHTED_AVG_DERIVATIVE,
                   "plp": cls.PARTIALLY_LINEAR_PROJECTION, "pl": cls.PARTIALLY_LINEAR_PROJECTION}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise InvalidSpecError(f"unknown functional {name!r}") from None


# ---------------------------------------------------------------------------
# weight functions for the average derivative
# ---------------------------------------------------------------------------


class PolynomialBump:
    """Derivative weight prod_d 6 x_d (1 - x_d); integrates to one."""

    name = "poly_bump"

    def derivative_weight(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        X = np.atleast_2d(X)
        return np.prod(6.0 * X * (1.0 - X), axis=1)

    def omega(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        X = np.atleast_2d(X)
        rest = np.prod(6.0 * X[:, 1:] * (1.0 - X[:, 1:]), axis=1)
        return -6.0 * (1.0 - 2.0 * X[:, 0]) * rest


class RaisedCosine:
    """Derivative weight prod_d (1 - cos 2 pi x_d); integrates to one."""

    name = "raised_cosine"

    def derivative_weight(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        X = np.atleast_2d(X)
        return np.prod(1.0 - np.cos(2 * np.pi * X), axis=1)

    def omega(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        X = np.atleast_2d(X)
        rest = np.prod(1.0 - np.cos(2 * np.pi * X[:, 1:]), axis=1)
        return -2.0 * np.pi * np.sin(2 * np.pi * X[:, 0]) * rest


@dataclass(frozen=True)
class IntegrationWeight:
    """Use ``fn`` directly as omega in ``m(gamma) = int omega gamma``."""

    fn: Callable[[NDArray[np.float64]], ArrayLike]
    name: str = "custom"

    def omega(self, X: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray(self.fn(np.atleast_2d(X)), dtype=float).reshape(-1)

    derivative_weight = None


WEIGHTS = {"poly_bump": PolynomialBump, "raised_cosine": RaisedCosine}


def named_weight(name: str):
    try:
        return WEIGHTS[name]()
    except KeyError:
        raise InvalidSpecError(f"unknown weight {name!r}; choose from {sorted(WEIGHTS)}") from None


def check_boundary(weight, r: int, n_points: int = 64, tol: float = 1e-8) -> None:
    """The derivative weight must vanish on the boundary of [0,1]^r."""
    dw = getattr(weight, "derivative_weight", None)
    if dw is None:
        return
    base = np.random.default_rng(0).random((n_points, r))
    pts = []
    for d in range(r):
        for edge in (0.0, 1.0):
            X = base.copy()
            X[:, d] = edge
            pts.append(X)
    vals = dw(np.vstack(pts))
    if np.max(np.abs(vals)) > tol:
        raise InvalidSpecError(
            f"derivative weight {getattr(weight, 'name', weight)!r} does not vanish on the boundary"
        )


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Observation:
    y: float
    a: float | NDArray[np.float64]
    x: NDArray[np.float64]


@dataclass(frozen=True)
class Dataset:
    """Columns ``y`` (n,), ``a`` (n,) or (n, d) and covariates ``x`` (n, r).

    For the missing-data kind ``x`` holds ``w``.
    """

    y: NDArray[np.float64]
    a: NDArray[np.float64]
    x: NDArray[np.float64]

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        a = np.asarray(self.a, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if a.ndim == 2 and a.shape[1] == 1:
            a = a[:, 0]
        if not (y.shape[0] == a.shape[0] == x.shape[0]):
            raise ShapeError(f"column lengths differ: y={y.shape[0]} a={a.shape[0]} x={x.shape[0]}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def r(self) -> int:
        return int(self.x.shape[1])

    def __len__(self) -> int:
        return self.n

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.y[idx], self.a[idx], self.x[idx])

    def observation(self, i: int) -> Observation:
        return Observation(float(self.y[i]), self.a[i], self.x[i])


@dataclass(frozen=True)
class FunctionalSpec:
    kind: FunctionalKind
    weight: object | None = None
    nodes_per_cell: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind.parse(self.kind))
        if isinstance(self.weight, str):
            object.__setattr__(self, "weight", named_weight(self.weight))
        self.validate()

    def validate(self) -> None:
        wad = self.kind is FunctionalKind.WEIGHTED_AVG_DERIVATIVE
        if wad and self.weight is None:
            raise InvalidSpecError("weighted average derivative needs a weight function")
        if not wad and self.weight is not None:
            raise InvalidSpecError(f"{self.kind.value} does not take a weight function")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.weight is not None:
            d["weight"] = getattr(self.weight, "name", "custom")
        return d


def _require_supported(f: FunctionalSpec) -> None:
    if f.kind is FunctionalKind.PARTIALLY_LINEAR_PROJECTION:
        raise UnsupportedError(
            "partially linear projection has no scalar m(z, gamma); use pl_projection"
        )


def check_data(f: FunctionalSpec, data: Dataset) -> None:
    if f.kind is FunctionalKind.MISSING_DATA_MEAN:
        bad = ~np.isin(data.a, (0.0, 1.0))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DataError(f"missing-data indicator must be 0 or 1 (observation {i})", row=i)
        if np.any((data.a == 0) & (data.y != 0)):
            raise DataError("missing-data outcome must be 0 when the indicator is 0")
    elif f.kind is not FunctionalKind.PARTIALLY_LINEAR_PROJECTION and data.a.ndim != 1:
        raise DataError(f"{f.kind.value} needs a scalar a")


# ---------------------------------------------------------------------------
# m, v and true Riesz representers
# ---------------------------------------------------------------------------


def _integrate_function(f: FunctionalSpec, gamma, r: int) -> float:
    """int omega(x) gamma(x) dx on the knot grid of gamma's basis when it has one."""
    basis = getattr(gamma, "basis", None)
    if isinstance(basis, Basis):
        cells = basis.spec.cells_per_dim
        nodes = basis.spec.kappa + 2 if f.nodes_per_cell is None else f.nodes_per_cell
    else:
        cells, nodes = max(4, 32 // r), 8
    X, w = composite_gauss_legendre(cells, nodes, r)
    vals = np.asarray(gamma(X), dtype=float).reshape(-1)
    return float(np.sum(w * f.weight.omega(X) * vals))


def _point(x, r=None) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise DomainError(f"covariate {x.ravel().tolist()} outside [0, 1]")
    return x


def m_eval(f: FunctionalSpec, z: Observation, gamma: Callable) -> float:
    """m(z, gamma) for one observation.

    ``gamma`` maps an (m, r) array of points to m values; for the
    missing-data kind it is ``w -> gamma(1, w)``.
    """
    _require_supported(f)
    x = _point(z.x)
    if f.kind is FunctionalKind.ECC:
        return float(z.a * (z.y - float(np.asarray(gamma(x)).reshape(-1)[0])))
    if f.kind is FunctionalKind.MISSING_DATA_MEAN:
        return float(np.asarray(gamma(x)).reshape(-1)[0])
    return _integrate_function(f, gamma, x.shape[1])


def v_eval(f: FunctionalSpec, z: Observation, basis: Basis) -> NDArray[np.float64]:
    """Basis action v(z), the vector of m(z, p_k) - m(z, 0)."""
    _require_supported(f)
    if f.kind is FunctionalKind.WEIGHTED_AVG_DERIVATIVE:
        return integrate_weighted(basis, f.weight.omega, f.nodes_per_cell)
    p = basis.evaluate(np.asarray(z.x, dtype=float).reshape(1, -1))[0]
    if f.kind is FunctionalKind.ECC:
        return -float(z.a) * p
    return p


def oracle_alpha(f: FunctionalSpec, dgp, z: Observation) -> float:
    """True Riesz representer at ``z`` from the data-generating process."""
    _require_supported(f)
    x = _point(z.x)

    def need(name):
        fn = getattr(dgp, name, None)
        if fn is None:
            raise InvalidSpecError(f"data-generating process does not provide {name}")
        return fn

    if f.kind is FunctionalKind.ECC:
        return -float(need("a_mean")(x)[0])
    if f.kind is FunctionalKind.MISSING_DATA_MEAN:
        return float(z.a) / float(need("pi0")(x)[0])
    return float(f.weight.omega(x)[0] / need("f0")(x)[0])


@dataclass(frozen=True)
class Moments:
    """Per-observation building blocks; see module docstring."""

    P: NDArray[np.float64]
    V: NDArray[np.float64]
    m0: NDArray[np.float64]
    y: NDArray[np.float64]


def prepare(f: FunctionalSpec, basis: Basis, data: Dataset) -> Moments:
    _require_supported(f)
    check_data(f, data)
    Q = basis.evaluate(data.x)
    if f.kind is FunctionalKind.ECC:
        return Moments(Q, -data.a[:, None] * Q, data.a * data.y, data.y)
    if f.kind is FunctionalKind.MISSING_DATA_MEAN:
        return Moments(data.a[:, None] * Q, Q, np.zeros(data.n), data.y)
    v = integrate_weighted(basis, f.weight.omega, f.nodes_per_cell)
    V = np.broadcast_to(v, Q.shape)
    return Moments(Q, V, np.zeros(data.n), data.y)


def values_from_functions(f: FunctionalSpec, data: Dataset, gamma: Callable, alpha: Callable):
    """Per-observation ``m(z_i, gamma)``, ``gamma(x_i)``, ``alpha(x_i)`` for fixed nuisances.

    Returns three length-n arrays.
    """
    _require_supported(f)
    check_data(f, data)
    X = data.x
    g = np.asarray(gamma(X), dtype=float).reshape(-1)
    al = np.asarray(alpha(X), dtype=float).reshape(-1)
    if f.kind is FunctionalKind.ECC:
        return data.a * (data.y - g), g, al
    if f.kind is FunctionalKind.MISSING_DATA_MEAN:
        return g, data.a * g, data.a * al
    m = np.full(data.n, _integrate_function(f, gamma, data.r))
    return m, g, al
