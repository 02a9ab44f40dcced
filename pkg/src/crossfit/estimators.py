"""Plug-in, cross-fit and doubly cross-fit estimators of average linear functionals.

Every estimator returns an :class:`EstimateResult` whose ``influence``
holds one estimated influence value per evaluated observation (in plan
group order, matching ``eval_idx``). Standard errors come from those values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma, exp
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .basis import Basis
from .errors import (
    EmptySampleError,
    PlanError,
    SingularGramError,
    SingularMatrixError,
    UnsupportedError,
)
from .functionals import (
    Dataset,
    FunctionalKind,
    FunctionalSpec,
    prepare,
    values_from_functions,
)
from .linreg import SeriesFit, fit_regression_design, fit_riesz_design, gram_from_design
from .splitting import SplitPlan, make_full_sample_plan

Z95 = 1.96
H_COND_MAX = 1e12


@dataclass
class EstimateResult:
    estimator: str
    beta: float | NDArray[np.float64]
    influence: NDArray[np.float64]
    se: float | NDArray[np.float64]
    ci95: tuple | NDArray[np.float64]
    eval_idx: NDArray[np.int64] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.influence.shape[0])

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, tuple):
                return [conv(u) for u in v]
            return v

        return {
            "estimator": self.estimator,
            "beta": conv(self.beta),
            "se": conv(self.se),
            "ci95": conv(self.ci95),
            "n_eval": self.n,
            "diagnostics": self.diagnostics,
        }


def influence_se(psi: ArrayLike, beta=None):
    """Standard error sqrt(sum (psi_i - mean)^2) / n and the 95% interval.

    ``psi`` may be (n,) or (n, d); for vector estimates the result is
    componentwise. The interval is ``None`` when ``beta`` is not given.
    """
    psi = np.asarray(psi, dtype=float)
    n = psi.shape[0] if psi.ndim else 0
    if n == 0:
        raise EmptySampleError("standard error needs at least one influence value")
    centered = psi - psi.mean(axis=0)
    se = np.sqrt(np.sum(centered**2, axis=0)) / n
    if psi.ndim == 1:
        se = float(se)
    if beta is None:
        return se, None
    if np.ndim(beta) == 0:
        b = float(beta)
        return se, (b - Z95 * se, b + Z95 * se)
    b = np.asarray(beta, dtype=float)
    return se, np.column_stack([b - Z95 * se, b + Z95 * se])


def _result(name, beta, psi, eval_idx, diagnostics) -> EstimateResult:
    se, ci = influence_se(psi, beta)
    return EstimateResult(name, beta, psi, se, ci, eval_idx, diagnostics)


def _fit_checked(fitter, P, target, group: int, role: str, require_gate: bool) -> SeriesFit:
    if P.shape[0] == 0:
        raise SingularGramError(f"group {group}: empty {role} sample", group=group, role=role)
    fit = fitter(P, target)
    if fit.gram.rank == 0:
        raise SingularGramError(
            f"group {group}: {role} gram matrix has rank 0", group=group, role=role
        )
    if require_gate and not fit.gram.nonsingular_flag:
        raise SingularGramError(
            f"group {group}: {role} gram matrix is singular (min eigenvalue "
            f"{fit.gram.min_eig:.3g})",
            group=group,
            role=role,
        )
    return fit


def _group_diag(group: int, fits: dict) -> dict:
    return {"group": group, **{role: fit.diagnostics() for role, fit in fits.items()}}


def _check_plan(plan: SplitPlan, data: Dataset, kinds: tuple[str, ...]) -> None:
    if plan.kind not in kinds:
        raise PlanError(f"plan kind {plan.kind!r} not allowed here; expected one of {kinds}")
    if plan.n != data.n:
        raise PlanError(f"plan is for n={plan.n} but data has n={data.n}")


def _normalizer(plan: SplitPlan) -> int:
    # equals n for partitioning plans; custom plans average over evaluated points
    n_eval = plan.n_eval
    if n_eval == 0:
        raise EmptySampleError("plan has no evaluation observations")
    return n_eval


def _common_diag(f: FunctionalSpec, basis: Basis, plan: SplitPlan | None, n: int) -> dict:
    d = {"functional": f.kind.value, "K": int(basis.K), "n": int(n)}
    if plan is not None:
        d["plan_kind"] = plan.kind
        d["L"] = plan.L
    return d


# ---------------------------------------------------------------------------
# plug-in estimators
# ---------------------------------------------------------------------------


def _plugin_core(name, f, basis, data, plan, require_gate):
    mom = prepare(f, basis, data)
    total = 0.0
    pieces, idx_all, groups = [], [], []
    for ell, g in enumerate(plan.groups):
        gfit = _fit_checked(fit_regression_design, mom.P[g.gamma_idx], mom.y[g.gamma_idx],
                            ell, "gamma", require_gate)
        # Riesz fit on the regression sample; used only for the influence values
        afit = _fit_checked(fit_riesz_design, mom.P[g.gamma_idx], mom.V[g.gamma_idx],
                            ell, "alpha", require_gate)
        e = g.eval_idx
        m = mom.m0[e] + mom.V[e] @ gfit.coeffs
        resid = mom.y[e] - mom.P[e] @ gfit.coeffs
        corr = (mom.P[e] @ afit.coeffs) * resid
        total += m.sum()
        pieces.append((m, corr))
        idx_all.append(e)
        groups.append(_group_diag(ell, {"gamma": gfit, "alpha": afit}))
    beta = total / _normalizer(plan)
    psi = np.concatenate([m - beta + corr for m, corr in pieces])
    diag = _common_diag(f, basis, plan, data.n)
    diag["groups"] = groups
    return _result(name, float(beta), psi, np.concatenate(idx_all), diag)


def plugin_no_split(f: FunctionalSpec, basis: Basis, data: Dataset,
                    require_gate: bool = False) -> EstimateResult:
    """Plug-in with the nuisance fit on the full sample (own-observation biased)."""
    if data.n == 0:
        raise EmptySampleError("no observations")
    res = _plugin_core("plugin", f, basis, data, make_full_sample_plan(data.n), require_gate)
    res.diagnostics["plan_kind"] = "none"
    return res


def cf_plugin(f: FunctionalSpec, basis: Basis, data: Dataset, plan: SplitPlan,
              require_gate: bool = False) -> EstimateResult:
    """Cross-fit plug-in: average of m(z_i, gamma_l) over each evaluation fold."""
    _check_plan(plan, data, ("plugin",))
    return _plugin_core("cf_plugin", f, basis, data, plan, require_gate)


# ---------------------------------------------------------------------------
# doubly robust estimators
# ---------------------------------------------------------------------------


def dr_estimate(f: FunctionalSpec, basis: Basis, data: Dataset, plan: SplitPlan,
                require_gate: bool = False) -> EstimateResult:
    """Doubly robust estimator with gamma fit on ``gamma_idx`` and alpha on ``alpha_idx``.

    With a ``single_cf_dr`` plan both nuisances use the same sample; with a
    ``dcdr`` plan they use disjoint samples.
    """
    _check_plan(plan, data, ("single_cf_dr", "dcdr"))
    mom = prepare(f, basis, data)
    total = 0.0
    terms, idx_all, groups = [], [], []
    for ell, g in enumerate(plan.groups):
        if g.alpha_idx is None:
            raise PlanError(f"group {ell} has no alpha index set")
        gfit = _fit_checked(fit_regression_design, mom.P[g.gamma_idx], mom.y[g.gamma_idx],
                            ell, "gamma", require_gate)
        afit = _fit_checked(fit_riesz_design, mom.P[g.alpha_idx], mom.V[g.alpha_idx],
                            ell, "alpha", require_gate)
        e = g.eval_idx
        t = (mom.m0[e] + mom.V[e] @ gfit.coeffs
             + (mom.P[e] @ afit.coeffs) * (mom.y[e] - mom.P[e] @ gfit.coeffs))
        total += t.sum()
        terms.append(t)
        idx_all.append(e)
        groups.append(_group_diag(ell, {"gamma": gfit, "alpha": afit}))
    beta = total / _normalizer(plan)
    psi = np.concatenate(terms) - beta
    diag = _common_diag(f, basis, plan, data.n)
    diag["groups"] = groups
    name = "dcdr" if plan.kind == "dcdr" else "single_cf_dr"
    return _result(name, float(beta), psi, np.concatenate(idx_all), diag)


def dr_fixed(f: FunctionalSpec, data: Dataset, gamma: Callable, alpha: Callable,
             eval_idx: ArrayLike | None = None) -> EstimateResult:
    """Doubly robust average with both nuisances frozen at given functions.

    Conventions for the callables follow :mod:`crossfit.functionals`; with
    the true nuisances this is beta0 plus the sample mean of the influence
    function.
    """
    if eval_idx is not None:
        data = data.subset(eval_idx)
    if data.n == 0:
        raise EmptySampleError("no observations")
    m, g, al = values_from_functions(f, data, gamma, alpha)
    t = m + al * (data.y - g)
    beta = float(t.mean())
    idx = None if eval_idx is None else np.asarray(eval_idx, dtype=np.int64)
    return _result("dr_fixed", beta, t - beta, idx, {"functional": f.kind.value, "n": data.n})


# ---------------------------------------------------------------------------
# partially linear projection
# ---------------------------------------------------------------------------


def pl_projection(basis: Basis, data: Dataset, plan: SplitPlan,
                  require_gate: bool = False) -> EstimateResult:
    """Instrumental-variables form of the cross-fit partially linear projection.

    Left-hand side ``y - gamma_hat(x)``, regressors ``a - alpha_hat(x)`` and
    instruments ``a - alpha_tilde(x)``, where ``alpha_hat`` and ``gamma_hat``
    are regressions on ``gamma_idx`` and ``alpha_tilde`` on ``alpha_idx``.
    """
    _check_plan(plan, data, ("single_cf_dr", "dcdr"))
    P = basis.evaluate(data.x)
    A = data.a.reshape(data.n, -1)
    d = A.shape[1]
    y = data.y
    Z_parts, R_parts, e_parts, idx_all, groups = [], [], [], [], []
    for ell, g in enumerate(plan.groups):
        if g.alpha_idx is None:
            raise PlanError(f"group {ell} has no alpha index set")
        gfit = _fit_checked(fit_regression_design, P[g.gamma_idx], y[g.gamma_idx],
                            ell, "gamma", require_gate)
        ahat = _fit_checked(fit_regression_design, P[g.gamma_idx], A[g.gamma_idx],
                            ell, "alpha_hat", require_gate)
        atil = _fit_checked(fit_regression_design, P[g.alpha_idx], A[g.alpha_idx],
                            ell, "alpha_tilde", require_gate)
        e = g.eval_idx
        Pe = P[e]
        Z_parts.append(A[e] - Pe @ atil.coeffs.reshape(-1, d))
        R_parts.append(A[e] - Pe @ ahat.coeffs.reshape(-1, d))
        e_parts.append(y[e] - Pe @ gfit.coeffs)
        idx_all.append(e)
        groups.append(_group_diag(ell, {"gamma": gfit, "alpha_hat": ahat, "alpha_tilde": atil}))
    Z = np.vstack(Z_parts)
    R = np.vstack(R_parts)
    res = np.concatenate(e_parts)
    N = _normalizer(plan)
    H = Z.T @ R / N
    num = Z.T @ res / N
    sv = np.linalg.svd(H, compute_uv=False)
    scale = max(float(np.max(np.mean(A * A, axis=0))), np.finfo(float).tiny)
    if sv[-1] <= 1e-12 * scale or sv[0] / sv[-1] > H_COND_MAX:
        raise SingularMatrixError(
            "cross-fit moment matrix of a is numerically singular",
            singular_values=sv.tolist(),
        )
    beta = np.linalg.solve(H, num)
    Hinv = np.linalg.inv(H)
    psi = (Z * (res - R @ beta)[:, None]) @ Hinv.T
    diag = {"functional": FunctionalKind.PARTIALLY_LINEAR_PROJECTION.value,
            "K": int(basis.K), "n": data.n, "plan_kind": plan.kind, "L": plan.L,
            "H": H.tolist(), "numerator": num.tolist(), "groups": groups}
    if d == 1:
        return _result("pl_projection", float(beta[0]), psi[:, 0], np.concatenate(idx_all), diag)
    return _result("pl_projection", beta, psi, np.concatenate(idx_all), diag)


# ---------------------------------------------------------------------------
# empirical higher-order influence function estimator (ECC)
# ---------------------------------------------------------------------------


def _u2(c: NDArray, d: NDArray) -> float:
    """sum over i != j of c_i' d_j."""
    return float(c.sum(axis=0) @ d.sum(axis=0) - np.sum(c * d))


def _u3(c: NDArray, d: NDArray, P: NDArray, S: NDArray, Sigma: NDArray) -> float:
    """sum over distinct (i, j, l) of c_i' S (p_l p_l' - Sigma) d_j.

    Complete sum minus the coincident-index sums, O(n K^2).
    """
    n = P.shape[0]
    C = c.sum(axis=0)
    D = d.sum(axis=0)
    M = P.T @ P - n * Sigma                      # sum_l M_l
    SC = c @ S                                   # rows c_i' S
    Md = d @ M.T                                 # rows M d_j
    all_ = C @ S @ M @ D
    ij = np.sum(SC * Md)                         # i = j
    spc = np.sum(SC * P, axis=1)                 # c_i' S p_i
    pd = np.sum(P * d, axis=1)                   # p_j' d_j
    il = np.sum(spc * (P @ D)) - np.sum(SC @ (Sigma @ D))                 # i = l
    jl = C @ S @ (P.T @ pd - Sigma @ D)                                   # j = l
    ijl = np.sum(spc * pd) - np.sum(SC * (d @ Sigma))                     # i = j = l
    return float(all_ - ij - il - jl + 2.0 * ijl)


def hoif_ecc(data: Dataset, basis: Basis, training_idx: ArrayLike, Q: int = 0,
             gamma_hat: Callable | None = None, alpha_hat: Callable | None = None,
             estimation_idx: ArrayLike | None = None) -> EstimateResult:
    """Empirical higher-order influence function estimator of the ECC, order Q + 2.

    The inverse second-moment matrix comes from ``training_idx``; all sums
    run over the estimation sample (default: the complement). ``alpha_hat``
    estimates E[a | x] and ``gamma_hat`` estimates E[y | x]; both default to 0.
    """
    if Q not in (0, 1):
        raise UnsupportedError(f"HOIF order Q={Q} not supported; Q must be 0 or 1")
    train = np.asarray(training_idx, dtype=np.int64)
    if estimation_idx is None:
        est = np.setdiff1d(np.arange(data.n), train)
    else:
        est = np.asarray(estimation_idx, dtype=np.int64)
    if np.intersect1d(train, est).size:
        raise PlanError("training and estimation samples overlap")
    if train.size == 0 or est.size == 0:
        raise EmptySampleError("HOIF needs nonempty training and estimation samples")

    Ptr = basis.evaluate(data.x[train])
    G = gram_from_design(Ptr)
    if not G.nonsingular_flag:
        raise SingularGramError(f"training gram is singular (min eigenvalue {G.min_eig:.3g})")
    Sigma = G.matrix
    S = np.linalg.inv(Sigma)

    X = data.x[est]
    P = basis.evaluate(X)
    n = est.size
    ga = np.zeros(n) if gamma_hat is None else np.asarray(gamma_hat(X), float).reshape(-1)
    al = np.zeros(n) if alpha_hat is None else np.asarray(alpha_hat(X), float).reshape(-1)
    ra = data.a[est] - al
    ry = data.y[est] - ga

    c = ra[:, None] * P
    d = (P @ S) * ry[:, None]
    first = float(np.mean(ra * ry))
    second = _u2(c, d) / (n * (n - 1)) if n >= 2 else 0.0
    beta = first - second
    third = 0.0
    if Q == 1 and n >= 3:
        w = exp(lgamma(n - 2) - lgamma(n + 1))    # (n-3)!/n!
        third = w * _u3(c, d, P, S, Sigma)
        beta += third

    # first-order influence with residuals projected through the training inverse
    ha = P.T @ ra / n
    hy = P.T @ ry / n
    psi = (ra - P @ (S @ ha)) * (ry - P @ (S @ hy))
    psi = psi - psi.mean()
    diag = {"functional": FunctionalKind.ECC.value, "K": int(basis.K), "n": int(n),
            "Q": Q, "terms": [first, -second, third], "training_gram": G.to_dict()}
    return _result(f"hoif{Q}", float(beta), psi, est, diag)


def hoif_ecc_bruteforce(data: Dataset, basis: Basis, training_idx: ArrayLike, Q: int = 0,
                        gamma_hat: Callable | None = None, alpha_hat: Callable | None = None,
                        estimation_idx: ArrayLike | None = None) -> float:
    """Literal index-loop HOIF value; O(n^3) and only meant as a check."""
    train = np.asarray(training_idx, dtype=np.int64)
    est = (np.setdiff1d(np.arange(data.n), train) if estimation_idx is None
           else np.asarray(estimation_idx, dtype=np.int64))
    Ptr = basis.evaluate(data.x[train])
    Sigma = Ptr.T @ Ptr / train.size
    S = np.linalg.inv(Sigma)
    X = data.x[est]
    P = basis.evaluate(X)
    n = est.size
    ga = np.zeros(n) if gamma_hat is None else np.asarray(gamma_hat(X), float).reshape(-1)
    al = np.zeros(n) if alpha_hat is None else np.asarray(alpha_hat(X), float).reshape(-1)
    ra = data.a[est] - al
    ry = data.y[est] - ga

    total = sum(ra[i] * ry[i] for i in range(n)) / n
    pair = 0.0
    for i in range(n):
        left = ra[i] * (P[i] @ S)
        for j in range(n):
            if i != j:
                pair += left @ P[j] * ry[j]
    total -= pair / (n * (n - 1)) if n >= 2 else 0.0
    if Q == 1 and n >= 3:
        B = np.stack([S @ (np.outer(P[l], P[l]) - Sigma) for l in range(n)])
        left = ra[:, None] * P
        right = (P @ S) * ry[:, None]
        # value of every (i, l, j) term straight from the definition
        T = np.einsum("ik,lkm,jm->ilj", left, B, right)
        trip = 0.0
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                for l in range(n):
                    if l != i and l != j:
                        trip += T[i, l, j]
        w = 1.0
        for k in range(n - 2, n + 1):
            w /= k
        total += w * trip
    return float(total)
