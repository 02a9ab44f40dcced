"""
Seeded data-generating processes, Monte Carlo replication, and rate sweeps.

The built-in processes have covariates uniform on [0,1]^r, trigonometric
nuisances and analytic truths:

=================  ====================================================
``ecc_smooth``     a = s(x) + sigma_u u, y = g(x) + rho sigma_u u + sigma_e e
``ecc_bounded``    as above with a = tanh(2 s(x)) + uniform noise
``ecc_rough``      Hoelder-0.6 / 0.4 nuisances built from |2x - 1|^s
``md_smooth``      a ~ Bernoulli(pi0(w)), y = a Y, E[Y | w] = mean(w) + sin term
``wad_poly``       y = x_1^2 + ..., derivative weight 6 x (1 - x)
``wad_cosine``     same regression, raised-cosine derivative weight
``plp_smooth``     y = a' beta + g(x) + sigma_e e
=================  ====================================================

Replication ``i`` of a run with master seed ``s`` draws from
``numpy.random.SeedSequence(s, spawn_key=(i,))`` so results do not depend on
how replications are scheduled across workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .basis import BasisSpec, build_basis
from .errors import CrossfitError, EmptySampleError, InvalidSpecError, RateGridError
from .estimators import (
    EstimateResult,
    cf_plugin,
    dr_estimate,
    dr_fixed,
    hoif_ecc,
    pl_projection,
    plugin_no_split,
)
from .functionals import Dataset, FunctionalKind, FunctionalSpec, named_weight
from .splitting import make_dcdr_plan, make_full_sample_plan, make_plugin_plan, make_single_cf_plan

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# data-generating processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DgpSpec:
    name: str
    kind: FunctionalKind
    family: str = "smooth"
    r: int = 1
    sigma_u: float = 1.0
    sigma_e: float = 1.0
    rho: float = 0.5
    slope: float = 1.0
    dim_a: int = 1
    weight: str | None = None
    # intended Hoelder orders; documentation only
    s_gamma: float = math.inf
    s_alpha: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "kind", FunctionalKind.parse(self.kind))
        if self.r < 1:
            raise InvalidSpecError("r must be at least 1")
        if self.kind is FunctionalKind.WEIGHTED_AVG_DERIVATIVE and self.weight is None:
            object.__setattr__(self, "weight", "poly_bump")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        for k in ("s_gamma", "s_alpha"):
            if math.isinf(d[k]):
                d[k] = None
        return d

    # -- component functions ------------------------------------------------

    def a_signal(self, X: NDArray) -> NDArray:
        X = np.atleast_2d(X)
        if self.family == "rough":
            return np.mean(np.abs(2.0 * X - 1.0) ** 0.6, axis=1)
        return np.mean(np.sin(TWO_PI * X), axis=1)

    def g(self, X: NDArray) -> NDArray:
        X = np.atleast_2d(X)
        if self.family == "rough":
            return np.mean(np.abs(2.0 * X - 1.0) ** 0.4, axis=1)
        return np.mean(np.cos(TWO_PI * X), axis=1)

    def a_mean(self, X: NDArray) -> NDArray:
        """E[a | x]; for the projection kind, an (m, dim_a) array."""
        X = np.atleast_2d(X)
        if self.kind is FunctionalKind.PARTIALLY_LINEAR_PROJECTION:
            xbar = X.mean(axis=1)
            return np.column_stack([np.sin(TWO_PI * xbar + k) for k in range(self.dim_a)])
        if self.kind is not FunctionalKind.ECC:
            raise InvalidSpecError(f"{self.name} has no E[a | x]")
        s = self.a_signal(X)
        return np.tanh(2.0 * s) if self.family == "bounded" else s

    def pi0(self, W: NDArray) -> NDArray:
        if self.kind is not FunctionalKind.MISSING_DATA_MEAN:
            raise InvalidSpecError(f"{self.name} has no propensity score")
        W = np.atleast_2d(W)
        return 0.5 + 0.3 * np.sin(TWO_PI * W[:, 0])

    def mu(self, W: NDArray) -> NDArray:
        """E[Y | w] for the missing-data kind."""
        W = np.atleast_2d(W)
        return W.mean(axis=1) + 0.25 * np.sin(TWO_PI * W[:, 0])

    def f0(self, X: NDArray) -> NDArray:
        return np.ones(np.atleast_2d(X).shape[0])

    def gamma0(self, X: NDArray) -> NDArray:
        """E[y | x] under the functional's conventions (gamma(1, w) for missing data)."""
        X = np.atleast_2d(X)
        k = self.kind
        if k is FunctionalKind.ECC:
            return self.g(X)
        if k is FunctionalKind.MISSING_DATA_MEAN:
            return self.mu(X)
        if k is FunctionalKind.WEIGHTED_AVG_DERIVATIVE:
            return X[:, 0] ** 2 + 0.5 * np.sum(np.cos(TWO_PI * X[:, 1:]), axis=1)
        return self.a_mean(X) @ np.full(self.dim_a, self.slope) + self.g(X)

    def alpha0(self, X: NDArray) -> NDArray:
        """Riesz representer (for missing data: the inverse propensity of w)."""
        k = self.kind
        if k is FunctionalKind.ECC:
            return -self.a_mean(X)
        if k is FunctionalKind.MISSING_DATA_MEAN:
            return 1.0 / self.pi0(X)
        if k is FunctionalKind.WEIGHTED_AVG_DERIVATIVE:
            return named_weight(self.weight).omega(X) / self.f0(X)
        raise InvalidSpecError("partially linear projection has no scalar Riesz representer")

    def gamma_wrong(self, X: NDArray) -> NDArray:
        X = np.atleast_2d(X)
        return self.gamma0(X) + 0.5 + X[:, 0]

    def alpha_wrong(self, X: NDArray) -> NDArray:
        X = np.atleast_2d(X)
        if self.kind is FunctionalKind.MISSING_DATA_MEAN:
            return 2.5 - X[:, 0]
        return 0.3 - X[:, 0]

    def functional(self) -> FunctionalSpec:
        return FunctionalSpec(self.kind, self.weight)


def true_beta(dgp: DgpSpec) -> float | NDArray:
    """Analytic value of the target for a built-in process."""
    k = dgp.kind
    if k is FunctionalKind.ECC:
        return dgp.rho * dgp.sigma_u**2
    if k is FunctionalKind.MISSING_DATA_MEAN:
        # E[mean(w)] = 1/2 and the sine term integrates to zero
        return 0.5
    if k is FunctionalKind.WEIGHTED_AVG_DERIVATIVE:
        # int v(x) 2 x_1 dx = 1 for both built-in weights
        return 1.0
    if dgp.dim_a == 1:
        return float(dgp.slope)
    return np.full(dgp.dim_a, float(dgp.slope))


def generate(dgp: DgpSpec, n: int, seed) -> Dataset:
    """Draw n i.i.d. observations; ``seed`` is an int or a SeedSequence."""
    if n < 1:
        raise InvalidSpecError("n must be at least 1")
    rng = np.random.default_rng(seed)
    X = rng.random((n, dgp.r))
    e = rng.standard_normal(n)
    k = dgp.kind
    if k is FunctionalKind.ECC:
        if dgp.family == "bounded":
            half = dgp.sigma_u * math.sqrt(3.0)
            u = rng.uniform(-half, half, n)
        else:
            u = dgp.sigma_u * rng.standard_normal(n)
        a = dgp.a_mean(X) + u
        y = dgp.g(X) + dgp.rho * u + dgp.sigma_e * e
        return Dataset(y, a, X)
    if k is FunctionalKind.MISSING_DATA_MEAN:
        a = (rng.random(n) < dgp.pi0(X)).astype(float)
        Y = dgp.mu(X) + dgp.sigma_e * e
        return Dataset(a * Y, a, X)
    if k is FunctionalKind.WEIGHTED_AVG_DERIVATIVE:
        return Dataset(dgp.gamma0(X) + dgp.sigma_e * e, np.zeros(n), X)
    U = dgp.sigma_u * rng.standard_normal((n, dgp.dim_a))
    A = dgp.a_mean(X) + U
    y = A @ np.full(dgp.dim_a, dgp.slope) + dgp.g(X) + dgp.sigma_e * e
    return Dataset(y, A if dgp.dim_a > 1 else A[:, 0], X)


_BUILTIN = {
    "ecc_smooth": DgpSpec("ecc_smooth", FunctionalKind.ECC, s_gamma=math.inf, s_alpha=math.inf),
    "ecc_bounded": DgpSpec("ecc_bounded", FunctionalKind.ECC, family="bounded"),
    "ecc_rough": DgpSpec("ecc_rough", FunctionalKind.ECC, family="rough", s_gamma=0.4, s_alpha=0.6),
    "md_smooth": DgpSpec("md_smooth", FunctionalKind.MISSING_DATA_MEAN),
    "wad_poly": DgpSpec("wad_poly", FunctionalKind.WEIGHTED_AVG_DERIVATIVE, weight="poly_bump"),
    "wad_cosine": DgpSpec("wad_cosine", FunctionalKind.WEIGHTED_AVG_DERIVATIVE,
                          weight="raised_cosine"),
    "plp_smooth": DgpSpec("plp_smooth", FunctionalKind.PARTIALLY_LINEAR_PROJECTION),
}


def builtin_dgp(name: str, **overrides) -> DgpSpec:
    try:
        base = _BUILTIN[name]
    except KeyError:
        raise InvalidSpecError(f"unknown dgp {name!r}; choose from {sorted(_BUILTIN)}") from None
    return replace(base, **overrides) if overrides else base


def builtin_dgp_names() -> list[str]:
    return sorted(_BUILTIN)


# ---------------------------------------------------------------------------
# running estimators on one replication
# ---------------------------------------------------------------------------

ESTIMATORS = (
    "plugin", "cf_plugin", "single_cf_dr", "dcdr", "pl_projection",
    "hoif0", "hoif1", "oracle", "dr_gamma_truth", "dr_alpha_truth",
)


@dataclass(frozen=True)
class EstimatorConfig:
    name: str
    L: int | None = None

    def __post_init__(self):
        if self.name not in ESTIMATORS:
            raise InvalidSpecError(f"unknown estimator {self.name!r}; choose from {ESTIMATORS}")


def _as_configs(estimators) -> tuple[EstimatorConfig, ...]:
    out = []
    for e in estimators:
        out.append(e if isinstance(e, EstimatorConfig) else EstimatorConfig(str(e)))
    return tuple(out)


def run_estimator(cfg: EstimatorConfig, dgp: DgpSpec, data: Dataset, basis_spec: BasisSpec,
                  L: int, plan_seed: int) -> EstimateResult:
    f = None if dgp.kind is FunctionalKind.PARTIALLY_LINEAR_PROJECTION else dgp.functional()
    L = cfg.L or L
    n = data.n
    name = cfg.name
    if name == "oracle":
        return dr_fixed(f, data, dgp.gamma0, dgp.alpha0)
    if name == "dr_gamma_truth":
        return dr_fixed(f, data, dgp.gamma0, dgp.alpha_wrong)
    if name == "dr_alpha_truth":
        return dr_fixed(f, data, dgp.gamma_wrong, dgp.alpha0)
    basis = build_basis(basis_spec)
    wad = dgp.kind is FunctionalKind.WEIGHTED_AVG_DERIVATIVE
    if name == "plugin":
        return plugin_no_split(f, basis, data)
    if name == "cf_plugin":
        plan = make_full_sample_plan(n) if wad else make_plugin_plan(n, max(L, 2), plan_seed)
        return cf_plugin(f, basis, data, plan)
    if name == "single_cf_dr":
        return dr_estimate(f, basis, data, make_single_cf_plan(n, max(L, 2), plan_seed))
    if name == "dcdr":
        return dr_estimate(f, basis, data, make_dcdr_plan(n, max(L, 3), plan_seed))
    if name == "pl_projection":
        return pl_projection(basis, data, make_dcdr_plan(n, max(L, 3), plan_seed))
    if name in ("hoif0", "hoif1"):
        train = np.random.default_rng(plan_seed).permutation(n)[: n // 2]
        return hoif_ecc(data, basis, train, Q=int(name[-1]))
    raise InvalidSpecError(f"unknown estimator {name!r}")


def replication_seeds(seed: int, i: int) -> tuple[np.random.SeedSequence, int]:
    child = np.random.SeedSequence(seed, spawn_key=(i,))
    data_ss, plan_ss = child.spawn(2)
    return data_ss, int(plan_ss.generate_state(1)[0])


def _replicate(task):
    dgp, configs, n, basis_spec, L, seed, i = task
    data_ss, plan_seed = replication_seeds(seed, i)
    data = generate(dgp, n, data_ss)
    out = []
    for cfg in configs:
        try:
            res = run_estimator(cfg, dgp, data, basis_spec, L, plan_seed)
            out.append((np.asarray(res.beta, float), np.asarray(res.se, float), None))
        except CrossfitError as exc:
            out.append((None, None, exc.code))
    return out


def _chunk_run(tasks):
    return [_replicate(t) for t in tasks]


def resolve_threads(threads: int | None) -> int:
    env = os.environ.get("CROSSFIT_THREADS")
    if env:
        threads = int(env)
    if threads is None or threads <= 0:
        threads = os.cpu_count() or 1
    return int(threads)


def _run_replications(tasks: list, threads: int) -> list:
    if threads <= 1 or len(tasks) < 2:
        return [_replicate(t) for t in tasks]
    size = max(1, math.ceil(len(tasks) / (4 * threads)))
    chunks = [tasks[i : i + size] for i in range(0, len(tasks), size)]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        # map preserves submission order, so aggregation is schedule independent
        return [r for chunk in ex.map(_chunk_run, chunks) for r in chunk]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _scalar_or_list(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v.tolist()


@dataclass
class EstimatorSummary:
    name: str
    betas: NDArray = field(repr=False)
    ses: NDArray = field(repr=False)
    beta0: float | NDArray
    n_failed: int = 0
    failure_codes: dict = field(default_factory=dict)

    @property
    def R(self) -> int:
        return int(self.betas.shape[0])

    @property
    def mean(self):
        return self.betas.mean(axis=0)

    @property
    def bias(self):
        return self.mean - self.beta0

    @property
    def sd(self):
        """Monte Carlo SD with the 1/R convention."""
        return np.sqrt(np.mean((self.betas - self.mean) ** 2, axis=0))

    @property
    def sd_defined(self) -> bool:
        return self.R >= 2

    @property
    def mcse(self):
        """Monte Carlo standard error of the mean (R - 1 variance)."""
        if self.R < 2:
            return np.zeros_like(self.mean)
        return self.betas.std(axis=0, ddof=1) / math.sqrt(self.R)

    @property
    def rmse(self):
        return np.sqrt(np.mean((self.betas - self.beta0) ** 2, axis=0))

    @property
    def coverage(self):
        return np.mean(np.abs(self.betas - self.beta0) <= 1.96 * self.ses, axis=0)

    @property
    def mean_se(self):
        return self.ses.mean(axis=0)

    def to_dict(self) -> dict:
        if self.R == 0:
            return {"name": self.name, "R_ok": 0, "n_failed": self.n_failed,
                    "failure_codes": self.failure_codes}
        return {
            "name": self.name,
            "R_ok": self.R,
            "n_failed": self.n_failed,
            "failure_codes": self.failure_codes,
            "true_beta": _scalar_or_list(self.beta0),
            "mean": _scalar_or_list(self.mean),
            "bias": _scalar_or_list(self.bias),
            "mcse": _scalar_or_list(self.mcse),
            "sd": _scalar_or_list(self.sd),
            "sd_defined": self.sd_defined,
            "rmse": _scalar_or_list(self.rmse),
            "coverage": _scalar_or_list(self.coverage),
            "mean_se": _scalar_or_list(self.mean_se),
        }


@dataclass
class MonteCarloReport:
    dgp: DgpSpec
    n: int
    basis: BasisSpec
    L: int
    R: int
    seed: int
    estimators: dict

    def __getitem__(self, name: str) -> EstimatorSummary:
        return self.estimators[name]

    def to_dict(self) -> dict:
        return {
            "config": {"dgp": self.dgp.to_dict(), "n": self.n, "basis": self.basis.to_dict(),
                       "L": self.L, "R": self.R, "seed": self.seed},
            "estimators": {k: v.to_dict() for k, v in self.estimators.items()},
        }


def run_monte_carlo(dgp: DgpSpec, estimators, n: int, basis_spec: BasisSpec, L: int = 3,
                    R: int = 100, seed: int = 0, threads: int | None = 1) -> MonteCarloReport:
    """R seeded replications of every estimator, summarized against the truth."""
    if R < 1:
        raise EmptySampleError("Monte Carlo needs at least one replication")
    configs = _as_configs(estimators)
    basis_spec.validate()
    tasks = [(dgp, configs, n, basis_spec, L, seed, i) for i in range(R)]
    results = _run_replications(tasks, resolve_threads(threads))
    b0 = true_beta(dgp)
    summaries = {}
    for k, cfg in enumerate(configs):
        betas, ses, codes = [], [], {}
        for rep in results:
            beta, se, code = rep[k]
            if code is not None:
                codes[code] = codes.get(code, 0) + 1
                continue
            betas.append(beta)
            ses.append(se)
        shape = np.shape(b0)
        summaries[cfg.name] = EstimatorSummary(
            cfg.name,
            np.array(betas, dtype=float).reshape((len(betas),) + shape),
            np.array(ses, dtype=float).reshape((len(ses),) + shape),
            b0,
            sum(codes.values()),
            codes,
        )
    return MonteCarloReport(dgp, n, basis_spec, L, R, seed, summaries)


# ---------------------------------------------------------------------------
# rate sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KRule:
    """Total basis size K = round(c * n**exponent) at spline order ``kappa``."""

    c: float = 2.0
    exponent: float = 1.0 / 3.0
    kappa: int = 1
    normalization: str = "none"

    def basis_for(self, n: int, r: int = 1) -> BasisSpec:
        K = max(1, int(round(self.c * n**self.exponent)))
        per_dim = max(1, int(round(K ** (1.0 / r))))
        cells = max(1, per_dim - self.kappa)
        return BasisSpec(r, self.kappa, cells, self.normalization)

    def to_dict(self) -> dict:
        return asdict(self)


def loglog_slope(ns, values) -> tuple[float, float]:
    """OLS slope of log(values) on log(n) and its conventional standard error."""
    x = np.log(np.asarray(ns, dtype=float))
    yv = np.log(np.asarray(values, dtype=float))
    Xd = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(Xd, yv, rcond=None)
    resid = yv - Xd @ coef
    dof = len(x) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else float("nan")
    cov = s2 * np.linalg.inv(Xd.T @ Xd)
    return float(coef[1]), float(math.sqrt(cov[1, 1]))


@dataclass
class RateReport:
    dgp: DgpSpec
    estimator: str
    k_rule: KRule
    L: int
    R: int
    seed: int
    cells: list
    slope: float
    slope_se: float
    target_slope: float = -0.5

    def to_dict(self) -> dict:
        return {
            "config": {"dgp": self.dgp.to_dict(), "estimator": self.estimator,
                       "k_rule": self.k_rule.to_dict(), "L": self.L, "R": self.R,
                       "seed": self.seed},
            "cells": self.cells,
            "slope": self.slope,
            "slope_se": self.slope_se,
            "target_slope": self.target_slope,
        }


def rate_sweep(dgp: DgpSpec, estimator, ns, k_rule: KRule, L: int = 3, R: int = 200,
               seed: int = 0, threads: int | None = 1) -> RateReport:
    """Monte Carlo at each n, then regress log RMSE on log n."""
    ns = [int(v) for v in ns]
    if len(ns) < 3:
        raise RateGridError(f"rate sweep needs at least 3 sample sizes, got {len(ns)}")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise RateGridError("sample sizes must be strictly increasing")
    cfg = estimator if isinstance(estimator, EstimatorConfig) else EstimatorConfig(estimator)
    cells = []
    for j, n in enumerate(ns):
        spec = k_rule.basis_for(n, dgp.r)
        cell_seed = int(np.random.SeedSequence(seed, spawn_key=(10_000 + j,)).generate_state(1)[0])
        rep = run_monte_carlo(dgp, [cfg], n, spec, L, R, cell_seed, threads)
        s = rep[cfg.name]
        if s.R == 0:
            raise CrossfitError(f"every replication failed at n={n}")
        cells.append({
            "n": n, "K": spec.K, "cells_per_dim": spec.cells_per_dim, "seed": cell_seed,
            "rmse": float(np.max(s.rmse)), "abs_bias": float(np.max(np.abs(s.bias))),
            "mcse": float(np.max(s.mcse)), "R_ok": s.R, "n_failed": s.n_failed,
        })
    slope, se = loglog_slope(ns, [c["rmse"] for c in cells])
    return RateReport(dgp, cfg.name, k_rule, L, R, seed, cells, slope, se)
