"""Sample-splitting plans for cross-fit estimators.

A plan is a list of groups. Group ``l`` evaluates the estimator on
``eval_idx``, fits the regression nuisance on ``gamma_idx`` and, for doubly
robust estimators, the Riesz nuisance on ``alpha_idx``. Indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import PlanError, UnsupportedError

PLAN_KINDS = ("plugin", "single_cf_dr", "dcdr")


def _as_idx(a: ArrayLike | None) -> NDArray[np.int64] | None:
    if a is None:
        return None
    arr = np.asarray(a, dtype=np.int64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GroupSplit:
    eval_idx: NDArray[np.int64]
    gamma_idx: NDArray[np.int64]
    alpha_idx: NDArray[np.int64] | None = None

    def __post_init__(self):
        object.__setattr__(self, "eval_idx", _as_idx(self.eval_idx))
        object.__setattr__(self, "gamma_idx", _as_idx(self.gamma_idx))
        object.__setattr__(self, "alpha_idx", _as_idx(self.alpha_idx))

    def to_dict(self) -> dict:
        d = {"eval": self.eval_idx.tolist(), "gamma": self.gamma_idx.tolist()}
        d["alpha"] = None if self.alpha_idx is None else self.alpha_idx.tolist()
        return d


@dataclass(frozen=True)
class SplitPlan:
    n: int
    groups: tuple[GroupSplit, ...]
    kind: str
    custom: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise PlanError(f"unknown plan kind {self.kind!r}")
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def L(self) -> int:
        return len(self.groups)

    @property
    def n_eval(self) -> int:
        return int(sum(g.eval_idx.size for g in self.groups))

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "kind": self.kind,
            "custom": bool(self.custom),
            "seed": self.seed,
            "groups": [g.to_dict() for g in self.groups],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        groups = tuple(GroupSplit(g["eval"], g["gamma"], g.get("alpha")) for g in d["groups"])
        return cls(int(d["n"]), groups, d["kind"], bool(d.get("custom", False)), d.get("seed"))


def custom_plan(n: int, groups, kind: str) -> SplitPlan:
    """Plan from explicit index sets; coverage of {0..n-1} is not required."""
    gs = []
    for g in groups:
        if isinstance(g, GroupSplit):
            gs.append(g)
        elif isinstance(g, dict):
            gs.append(GroupSplit(g["eval"], g["gamma"], g.get("alpha")))
        else:
            gs.append(GroupSplit(*g))
    if kind == "single_cf_dr":
        gs = [GroupSplit(g.eval_idx, g.gamma_idx, g.gamma_idx) if g.alpha_idx is None else g for g in gs]
    plan = SplitPlan(int(n), tuple(gs), kind, custom=True)
    for g in plan.groups:
        for idx in (g.eval_idx, g.gamma_idx, g.alpha_idx):
            if idx is not None and idx.size and (idx.min() < 0 or idx.max() >= n):
                raise PlanError(f"index out of range for n={n}")
    return plan


def _folds(n: int, L: int, seed: int | None, shuffle: bool) -> list[NDArray[np.int64]]:
    if shuffle:
        perm = np.random.default_rng(seed).permutation(n)
    else:
        perm = np.arange(n)
    # array_split puts the remainder in the leading folds
    return [np.sort(f) for f in np.array_split(perm, L)]


def make_plugin_plan(n: int, L: int, seed: int | None = 0, shuffle: bool = True) -> SplitPlan:
    """L near-equal evaluation folds; each nuisance trains on the complement."""
    if L < 2:
        raise PlanError(f"plug-in plan needs L >= 2 groups, got L={L}")
    if L > n:
        raise PlanError(f"cannot split n={n} observations into L={L} groups")
    folds = _folds(n, L, seed, shuffle)
    everything = np.arange(n)
    groups = tuple(GroupSplit(f, np.setdiff1d(everything, f)) for f in folds)
    return SplitPlan(n, groups, "plugin", seed=seed)


def make_single_cf_plan(n: int, L: int, seed: int | None = 0, shuffle: bool = True) -> SplitPlan:
    """Plug-in folds with both nuisances trained on the same complement."""
    base = make_plugin_plan(n, L, seed, shuffle)
    groups = tuple(GroupSplit(g.eval_idx, g.gamma_idx, g.gamma_idx) for g in base.groups)
    return SplitPlan(n, groups, "single_cf_dr", seed=seed)


def make_dcdr_plan(n: int, L: int = 3, seed: int | None = 0, shuffle: bool = True) -> SplitPlan:
    """Rotating three-role plan.

    Group ``l`` evaluates on fold ``l``; the other folds, taken in cyclic
    order starting at ``l + 1``, are cut into a leading run (regression
    nuisance) and a trailing run (Riesz nuisance).
    """
    if L < 3:
        raise PlanError(f"doubly cross-fit plan needs L >= 3 groups, got L={L}")
    if L > n:
        raise PlanError(f"cannot split n={n} observations into L={L} groups")
    folds = _folds(n, L, seed, shuffle)
    # leading run gets ceil((L - 1) / 2) folds
    n_gamma = L // 2
    groups = []
    for ell in range(L):
        others = [folds[(ell + k) % L] for k in range(1, L)]
        gamma = np.sort(np.concatenate(others[:n_gamma]))
        alpha = np.sort(np.concatenate(others[n_gamma:]))
        groups.append(GroupSplit(folds[ell], gamma, alpha))
    return SplitPlan(n, tuple(groups), "dcdr", seed=seed)


def make_full_sample_plan(n: int) -> SplitPlan:
    """Degenerate one-group plan where every role uses all observations."""
    everything = np.arange(n)
    return SplitPlan(n, (GroupSplit(everything, everything, everything),), "plugin", custom=True)


def make_plan(kind: str, n: int, L: int, seed: int | None = 0, n_splits: int = 1) -> SplitPlan:
    if n_splits != 1:
        raise UnsupportedError("averaging over repeated random splits is not implemented")
    if kind == "plugin":
        return make_plugin_plan(n, L, seed)
    if kind == "single_cf_dr":
        return make_single_cf_plan(n, L, seed)
    if kind == "dcdr":
        return make_dcdr_plan(n, L, seed)
    raise PlanError(f"unknown plan kind {kind!r}")


@dataclass(frozen=True)
class PlanDiagnostics:
    disjoint: bool
    coverage: bool
    size_ok: bool
    roles_ok: bool
    min_sizes: dict = field(default_factory=dict)
    size_floor: int = 0

    @property
    def ok(self) -> bool:
        return self.disjoint and self.coverage and self.size_ok and self.roles_ok

    def to_dict(self) -> dict:
        return {
            "disjoint": self.disjoint,
            "coverage": self.coverage,
            "size_ok": self.size_ok,
            "roles_ok": self.roles_ok,
            "min_sizes": dict(self.min_sizes),
            "size_floor": int(self.size_floor),
        }


def validate_plan(plan: SplitPlan, c: float | None = None) -> PlanDiagnostics:
    """Report disjointness, coverage, role structure and size bounds."""
    n = plan.n
    if c is None:
        c = 1.0 / (2 * max(plan.L, 1))
    floor = int(np.floor(c * n))

    disjoint = True
    roles_ok = True
    sizes = {"eval": n, "gamma": n, "alpha": n}
    for g in plan.groups:
        e, gm, al = set(g.eval_idx.tolist()), set(g.gamma_idx.tolist()), None
        if len(e) != g.eval_idx.size or len(gm) != g.gamma_idx.size:
            disjoint = False
        if e & gm:
            disjoint = False
        sizes["eval"] = min(sizes["eval"], len(e))
        sizes["gamma"] = min(sizes["gamma"], len(gm))
        if g.alpha_idx is not None:
            al = set(g.alpha_idx.tolist())
            sizes["alpha"] = min(sizes["alpha"], len(al))
            if e & al:
                disjoint = False
        if plan.kind == "dcdr":
            if al is None:
                roles_ok = False
            else:
                if al & gm:
                    disjoint = False
                if (e | gm | al) != set(range(n)):
                    roles_ok = False
        elif plan.kind == "single_cf_dr":
            if al is None or al != gm:
                roles_ok = False

    evals = np.concatenate([g.eval_idx for g in plan.groups]) if plan.groups else np.array([])
    coverage = bool(evals.size == n and np.array_equal(np.sort(evals), np.arange(n)))
    if evals.size != np.unique(evals).size:
        disjoint = False

    checked = ["eval", "gamma"] + (["alpha"] if plan.kind == "dcdr" else [])
    size_ok = all(sizes[k] >= max(floor, 1) for k in checked)
    min_sizes = {k: int(sizes[k]) for k in checked}
    return PlanDiagnostics(disjoint, coverage, size_ok, roles_ok, min_sizes, floor)
