"""Gram matrices, PSD pseudo-inverses, and series / Riesz-representer fits.

All moments use 1/n averaging. The generalized inverse is Moore-Penrose,
computed from a symmetric eigendecomposition so that fitted coefficients
always lie in the row space of the gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .basis import Basis
from .errors import EmptySampleError, NotSymmetricError, ShapeError

REL_TOL = 1e-10
EIG_THRESHOLD = 1e-8
# theoretical gate from the rate proofs; diagnostic only
THEORY_GATE = 0.5


@dataclass(frozen=True)
class GramSummary:
    matrix: NDArray[np.float64] = field(repr=False)
    rank: int
    min_eig: float
    max_eig: float
    nonsingular_flag: bool
    theory_gate: bool
    unsupported: int

    @property
    def K(self) -> int:
        return int(self.matrix.shape[0])

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "rank": int(self.rank),
            "min_eig": float(self.min_eig),
            "max_eig": float(self.max_eig),
            "nonsingular": bool(self.nonsingular_flag),
            "theory_gate": bool(self.theory_gate),
            "unsupported": int(self.unsupported),
        }


def _is_diagonal(S: NDArray[np.float64]) -> bool:
    # order-0 (Haar) grams are exactly diagonal; skip the eigendecomposition
    return S.size > 0 and np.count_nonzero(S) == np.count_nonzero(np.diag(S))


def summarize_gram(
    S: NDArray[np.float64], eig_threshold: float = EIG_THRESHOLD, rel_tol: float = REL_TOL
) -> GramSummary:
    S = 0.5 * (S + S.T)
    diag = np.diag(S)
    eigs = np.sort(diag) if _is_diagonal(S) else np.linalg.eigvalsh(S)
    max_eig = float(eigs[-1]) if eigs.size else 0.0
    min_eig = float(eigs[0]) if eigs.size else 0.0
    cut = rel_tol * max_eig if max_eig > 0 else 0.0
    rank = int(np.sum(eigs > cut)) if max_eig > 0 else 0
    # basis functions with no data mass on their support (empty Haar cells)
    unsupported = int(np.sum(np.abs(diag) <= cut))
    return GramSummary(
        matrix=S,
        rank=rank,
        min_eig=min_eig,
        max_eig=max_eig,
        nonsingular_flag=bool(min_eig > eig_threshold),
        theory_gate=bool(min_eig > THEORY_GATE),
        unsupported=unsupported,
    )


def gram_from_design(P: ArrayLike) -> GramSummary:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        raise EmptySampleError("gram matrix needs at least one observation")
    return summarize_gram(P.T @ P / P.shape[0])


def gram(basis: Basis, xs: ArrayLike) -> GramSummary:
    """(1/n) sum_i p(x_i) p(x_i)' with eigenvalue diagnostics."""
    X = np.asarray(xs, dtype=float)
    if X.size == 0:
        raise EmptySampleError("gram matrix needs at least one observation")
    return gram_from_design(basis.evaluate(X))


def pinv_psd(A: ArrayLike, rel_tol: float = REL_TOL) -> NDArray[np.float64]:
    """Moore-Penrose inverse of a symmetric PSD matrix.

    Eigenvalues below ``rel_tol * max_eig`` (including negative rounding
    noise) are treated as zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise NotSymmetricError(f"matrix must be square, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * scale:
        raise NotSymmetricError("matrix is not symmetric within 1e-10")
    A = 0.5 * (A + A.T)
    if _is_diagonal(A):
        d = np.diag(A)
        top = d.max()
        inv = np.zeros_like(d)
        if top > 0:
            keep = d > rel_tol * top
            inv[keep] = 1.0 / d[keep]
        return np.diag(inv)
    w, V = np.linalg.eigh(A)
    if w.size == 0 or w[-1] <= 0:
        return np.zeros_like(A)
    keep = w > rel_tol * w[-1]
    Vk = V[:, keep]
    return (Vk / w[keep]) @ Vk.T


@dataclass(frozen=True)
class SeriesFit:
    coeffs: NDArray[np.float64]
    gram: GramSummary
    n_used: int
    target: str
    basis: Basis | None = field(default=None, repr=False, compare=False)

    def predict_design(self, P: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(P, dtype=float) @ self.coeffs

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        if self.basis is None:
            raise ShapeError("fit has no attached basis; use predict_design")
        return self.basis.evaluate(x) @ self.coeffs

    def diagnostics(self) -> dict:
        d = self.gram.to_dict()
        d["n_used"] = int(self.n_used)
        d["target"] = self.target
        return d


@dataclass(frozen=True)
class SeriesFunction:
    """``x -> p(x)' coeffs``; carries its basis so integrals can use the knot grid."""

    basis: Basis = field(repr=False)
    coeffs: NDArray[np.float64]

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        return self.basis.evaluate(x) @ np.asarray(self.coeffs, dtype=float)

    @classmethod
    def unit(cls, basis: Basis, k: int) -> "SeriesFunction":
        """The single basis function p_k."""
        e = np.zeros(basis.K)
        e[k] = 1.0
        return cls(basis, e)


def _solve(S: GramSummary, h: NDArray[np.float64], rel_tol: float) -> NDArray[np.float64]:
    G = pinv_psd(S.matrix, rel_tol)
    delta = G @ h
    # iterative refinement; corrections stay in the range of the gram matrix
    for _ in range(2):
        delta = delta + G @ (h - S.matrix @ delta)
    return delta


def fit_regression_design(
    P: ArrayLike, y: ArrayLike, rel_tol: float = REL_TOL, basis: Basis | None = None
) -> SeriesFit:
    """Least-squares series coefficients from a design matrix.

    ``y`` may be (n,) or (n, d); a 2-D response gives a (K, d) coefficient
    matrix, one column per response.
    """
    P = np.asarray(P, dtype=float)
    y = np.asarray(y, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        raise EmptySampleError("regression needs at least one observation")
    if y.shape[0] != P.shape[0]:
        raise ShapeError(f"{P.shape[0]} design rows but {y.shape[0]} responses")
    n = P.shape[0]
    S = gram_from_design(P)
    h = P.T @ y / n
    return SeriesFit(_solve(S, h, rel_tol), S, n, "regression", basis)


def fit_riesz_design(
    P: ArrayLike, V: ArrayLike, rel_tol: float = REL_TOL, basis: Basis | None = None
) -> SeriesFit:
    """Riesz coefficients: gram of ``P`` (pseudo-)inverted against mean of ``V``."""
    P = np.asarray(P, dtype=float)
    V = np.asarray(V, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        raise EmptySampleError("Riesz fit needs at least one observation for the gram")
    if V.ndim == 1:
        V = V.reshape(1, -1)
    if V.shape[0] == 0:
        raise EmptySampleError("Riesz fit needs at least one v sample")
    if V.shape[1] != P.shape[1]:
        raise ShapeError(f"v samples have length {V.shape[1]}, basis has K={P.shape[1]}")
    S = gram_from_design(P)
    h = V.mean(axis=0)
    return SeriesFit(_solve(S, h, rel_tol), S, P.shape[0], "riesz", basis)


def fit_regression(basis: Basis, xs: ArrayLike, ys: ArrayLike, rel_tol: float = REL_TOL) -> SeriesFit:
    X = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    nx = X.shape[0] if X.ndim else 1
    if nx != y.shape[0]:
        raise ShapeError(f"{nx} points but {y.shape[0]} responses")
    return fit_regression_design(basis.evaluate(X), y, rel_tol, basis)


def fit_riesz(
    basis: Basis, v_samples: ArrayLike, xs_for_gram: ArrayLike, rel_tol: float = REL_TOL
) -> SeriesFit:
    V = np.asarray(v_samples, dtype=float)
    if V.ndim == 2 and V.shape[1] != basis.K:
        raise ShapeError(f"v samples have length {V.shape[1]}, basis has K={basis.K}")
    return fit_riesz_design(basis.evaluate(xs_for_gram), V, rel_tol, basis)
