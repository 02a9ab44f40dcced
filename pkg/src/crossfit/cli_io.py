"""
Command-line front end, CSV ingestion and JSON reports.

::

    crossfit estimate --functional ecc --estimator dcdr --kappa 0 --cells 4 \\
        --folds 3 --seed 7 --data d.csv --out r.json
    crossfit simulate --dgp ecc_smooth --n 1000 --reps 200 --seed 1
    crossfit rates --dgp ecc_smooth --ns 500,1000,2000,4000 --reps 200

Options may also come from a JSON file given with ``--config``; explicit
flags take precedence over the file. Failures print
``{"schema": "1", "error": {"code": ..., "message": ...}}`` on stderr and
exit with status 2 (1 for unexpected internal errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .basis import NORMALIZATIONS, BasisSpec, build_basis
from .errors import ConfigError, CrossfitError, DataError, DomainError
from .estimators import (
    EstimateResult,
    cf_plugin,
    dr_estimate,
    hoif_ecc,
    pl_projection,
    plugin_no_split,
)
from .functionals import Dataset, FunctionalKind, FunctionalSpec, check_boundary
from .simlab import ESTIMATORS, KRule, builtin_dgp, rate_sweep, run_monte_carlo
from .splitting import make_dcdr_plan, make_full_sample_plan, make_plugin_plan, make_single_cf_plan

SCHEMA = "1"
MODES = ("estimate", "simulate", "rates")
DATA_ESTIMATORS = ("plugin", "cf_plugin", "single_cf_dr", "dcdr", "pl_projection", "hoif0", "hoif1")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    mode: str
    functional: str | None = None
    estimators: tuple = ()
    kappa: int = 1
    cells: int = 7
    normalization: str = "none"
    folds: int = 3
    seed: int = 0
    data: str | None = None
    dgp: str | None = None
    n: int | None = None
    reps: int = 100
    ns: tuple = ()
    k_c: float = 2.0
    k_a: float = 1.0 / 3.0
    weight: str | None = None
    out: str | None = None
    rescale: bool = False
    gate: bool = False
    threads: int | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        if self.kappa < 0 or self.cells < 1:
            raise ConfigError("need kappa >= 0 and cells >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.mode == "estimate":
            if self.data is None:
                raise ConfigError("estimate mode needs --data")
            if self.functional is None:
                raise ConfigError("estimate mode needs --functional")
            kind = FunctionalKind.parse(self.functional)
            for e in self.estimators:
                if e not in DATA_ESTIMATORS:
                    raise ConfigError(f"unknown estimator {e!r}; choose from {DATA_ESTIMATORS}")
                plp = kind is FunctionalKind.PARTIALLY_LINEAR_PROJECTION
                if plp != (e == "pl_projection"):
                    raise ConfigError(f"estimator {e!r} does not apply to {kind.value}")
                if e.startswith("hoif") and kind is not FunctionalKind.ECC:
                    raise ConfigError("HOIF estimators are implemented for ecc only")
            if self.folds < 3 and "dcdr" in self.estimators:
                raise ConfigError("dcdr needs folds >= 3")
        else:
            if self.dgp is None:
                raise ConfigError(f"{self.mode} mode needs --dgp")
            for e in self.estimators:
                if e not in ESTIMATORS:
                    raise ConfigError(f"unknown estimator {e!r}; choose from {ESTIMATORS}")
            if self.reps < 1:
                raise ConfigError("reps must be at least 1")
        if self.mode == "simulate" and (self.n is None or self.n < 1):
            raise ConfigError("simulate mode needs --n >= 1")
        if self.mode == "rates" and len(self.estimators) != 1:
            raise ConfigError("rates mode takes exactly one estimator")

    def basis_spec(self, r: int) -> BasisSpec:
        return BasisSpec(r, self.kappa, self.cells, self.normalization)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        d["ns"] = list(self.ns)
        return d


def _split_list(text, cast=str) -> tuple:
    if text is None:
        return ()
    if isinstance(text, (list, tuple)):
        return tuple(cast(v) for v in text)
    return tuple(cast(v.strip()) for v in str(text).split(",") if v.strip())


def _default_estimators(mode: str, functional: str | None) -> tuple:
    if mode == "estimate" and functional is not None:
        if FunctionalKind.parse(functional) is FunctionalKind.PARTIALLY_LINEAR_PROJECTION:
            return ("pl_projection",)
    if mode == "simulate":
        return ("plugin", "cf_plugin", "dcdr")
    return ("dcdr",)


def config_from_sources(mode: str, flags: dict, file_values: dict | None = None) -> RunConfig:
    """Merge defaults, a config-file mapping and explicit flags (flags win)."""
    known = {f.name for f in fields(RunConfig)}
    merged: dict = {}
    for source in (file_values or {}, flags):
        for key, val in source.items():
            key = key.replace("-", "_")
            if key == "estimator":
                key = "estimators"
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            if val is not None:
                merged[key] = val
    merged["mode"] = mode
    if "estimators" in merged:
        merged["estimators"] = _split_list(merged["estimators"])
    else:
        merged["estimators"] = _default_estimators(mode, merged.get("functional"))
    if "ns" in merged:
        merged["ns"] = _split_list(merged["ns"], int)
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _indexed_columns(header: list[str], prefix: str) -> list[str]:
    found = {}
    for name in header:
        m = re.fullmatch(rf"{prefix}(\d+)", name)
        if m:
            found[int(m.group(1))] = name
    if not found:
        return []
    expected = list(range(1, max(found) + 1))
    if sorted(found) != expected:
        missing = sorted(set(expected) - set(found))
        raise DataError(f"column {prefix}{missing[0]} is missing", column=f"{prefix}{missing[0]}")
    return [found[i] for i in expected]


def load_csv(path, functional, rescale: bool = False) -> tuple[Dataset, dict]:
    """Read a UTF-8 CSV with a header row into a :class:`Dataset`.

    Rows are numbered from 1 at the first data line in error messages.
    Returns the dataset and an ingestion record (rescaling bounds, if any).
    """
    kind = FunctionalKind.parse(functional)
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}", path=str(path)) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty", path=str(path)) from None
        rows = [row for row in reader if row and any(c.strip() for c in row)]

    if "y" not in header:
        raise DataError("required column 'y' is missing", column="y")
    if kind is FunctionalKind.PARTIALLY_LINEAR_PROJECTION and "a" not in header:
        a_cols = _indexed_columns(header, "a")
    else:
        a_cols = ["a"] if "a" in header else []
    if not a_cols:
        raise DataError("required column 'a' is missing", column="a")
    prefix = "w" if kind is FunctionalKind.MISSING_DATA_MEAN and "w1" in header else "x"
    x_cols = _indexed_columns(header, prefix)
    if not x_cols:
        raise DataError(f"required column '{prefix}1' is missing", column=f"{prefix}1")

    pos = {name: i for i, name in enumerate(header)}
    wanted = ["y"] + a_cols + x_cols
    values = np.empty((len(rows), len(wanted)))
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"row {r} has {len(row)} fields, expected {len(header)}", row=r)
        for c, name in enumerate(wanted):
            cell = row[pos[name]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"row {r}, column {name}: non-numeric value {cell!r}",
                                row=r, column=name) from None
            if not math.isfinite(v):
                raise DataError(f"row {r}, column {name}: non-finite value", row=r, column=name)
            values[r - 1, c] = v
    if values.shape[0] == 0:
        raise DataError(f"{path} has no data rows", path=str(path))

    y = values[:, 0]
    A = values[:, 1 : 1 + len(a_cols)]
    X = values[:, 1 + len(a_cols) :]

    if kind is FunctionalKind.MISSING_DATA_MEAN:
        bad = np.flatnonzero(~np.isin(A[:, 0], (0.0, 1.0)))
        if bad.size:
            r = int(bad[0]) + 1
            raise DataError(f"row {r}: indicator a must be 0 or 1, got {A[bad[0], 0]:g}",
                            row=r, column="a")
        bad = np.flatnonzero((A[:, 0] == 0) & (y != 0))
        if bad.size:
            r = int(bad[0]) + 1
            raise DataError(f"row {r}: y must be 0 when a is 0", row=r, column="y")

    record: dict = {"path": str(path), "n": int(values.shape[0]), "columns": wanted,
                    "rescaled": bool(rescale)}
    if rescale:
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = np.clip((X - lo) / span, 0.0, 1.0)
        record["rescale_min"] = lo.tolist()
        record["rescale_max"] = hi.tolist()
    else:
        out = np.argwhere((X < 0) | (X > 1))
        if out.size:
            r, c = int(out[0, 0]) + 1, int(out[0, 1])
            raise DomainError(f"row {r}, column {x_cols[c]}: covariate {X[r - 1, c]:g} outside "
                              "[0, 1]; pass --rescale to min-max scale", row=r, column=x_cols[c])
    return Dataset(y, A[:, 0] if A.shape[1] == 1 else A, X), record


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def _estimate_one(name: str, cfg: RunConfig, f, basis, data: Dataset) -> tuple[EstimateResult, dict]:
    n, L, seed, gate = data.n, cfg.folds, cfg.seed, cfg.gate
    if name == "pl_projection":
        plan = make_dcdr_plan(n, L, seed) if L >= 3 else make_single_cf_plan(n, L, seed)
        return pl_projection(basis, data, plan, gate), plan.to_dict()
    if name in ("hoif0", "hoif1"):
        train = np.sort(np.random.default_rng(seed).permutation(n)[: n // 2])
        res = hoif_ecc(data, basis, train, Q=int(name[-1]))
        return res, {"training": train.tolist(), "estimation": res.eval_idx.tolist()}
    if name == "plugin":
        return plugin_no_split(f, basis, data, gate), {"kind": "none", "n": n}
    if name == "cf_plugin":
        if f.kind is FunctionalKind.WEIGHTED_AVG_DERIVATIVE:
            # m does not depend on the observation, so there is nothing to split
            plan = make_full_sample_plan(n)
        else:
            plan = make_plugin_plan(n, L, seed)
        return cf_plugin(f, basis, data, plan, gate), plan.to_dict()
    if name == "single_cf_dr":
        plan = make_single_cf_plan(n, L, seed)
    else:
        plan = make_dcdr_plan(n, L, seed)
    return dr_estimate(f, basis, data, plan, gate), plan.to_dict()


def run_estimate(cfg: RunConfig) -> dict:
    kind = FunctionalKind.parse(cfg.functional)
    data, record = load_csv(cfg.data, kind, cfg.rescale)
    f = None
    if kind is not FunctionalKind.PARTIALLY_LINEAR_PROJECTION:
        weight = cfg.weight or ("poly_bump" if kind is FunctionalKind.WEIGHTED_AVG_DERIVATIVE else None)
        f = FunctionalSpec(kind, weight)
        if f.weight is not None:
            check_boundary(f.weight, data.r)
    spec = cfg.basis_spec(data.r)
    spec.validate()
    basis = build_basis(spec)
    estimates = {}
    for name in cfg.estimators:
        res, plan = _estimate_one(name, cfg, f, basis, data)
        entry = res.to_dict()
        entry["plan"] = plan
        estimates[name] = entry
    first = estimates[cfg.estimators[0]]
    return {"data": record, "basis": spec.to_dict(), "beta": first["beta"], "se": first["se"],
            "ci95": first["ci95"], "estimates": estimates}


def run_simulate(cfg: RunConfig) -> dict:
    dgp = builtin_dgp(cfg.dgp)
    spec = cfg.basis_spec(dgp.r)
    rep = run_monte_carlo(dgp, cfg.estimators, cfg.n, spec, cfg.folds, cfg.reps, cfg.seed,
                          cfg.threads)
    return {"monte_carlo": rep.to_dict()}


def run_rates(cfg: RunConfig) -> dict:
    dgp = builtin_dgp(cfg.dgp)
    rule = KRule(cfg.k_c, cfg.k_a, cfg.kappa, cfg.normalization)
    rep = rate_sweep(dgp, cfg.estimators[0], cfg.ns, rule, cfg.folds, cfg.reps, cfg.seed,
                     cfg.threads)
    return {"rate": rep.to_dict()}


_PIPELINES = {"estimate": run_estimate, "simulate": run_simulate, "rates": run_rates}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_report(report: dict) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(_clean(report), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute ``cfg``; returns the exit code and the report (written to ``cfg.out`` if set)."""
    cfg.validate()
    body = _PIPELINES[cfg.mode](cfg)
    report = {"schema": SCHEMA, "mode": cfg.mode, "config": cfg.to_dict(),
              "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"), **body}
    text = dumps_report(report)
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0, report


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crossfit", description="Cross-fit series estimators of linear functionals.")
    sub = parser.add_subparsers(dest="mode", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of options; flags override it")
    common.add_argument("--estimator", help="comma-separated estimator names")
    common.add_argument("--kappa", type=int, help="spline order (0 = Haar)")
    common.add_argument("--cells", type=int, help="knot intervals per coordinate")
    common.add_argument("--normalization", choices=NORMALIZATIONS)
    common.add_argument("--folds", type=int, help="number of cross-fit groups L")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--threads", type=int, help="worker processes (env CROSSFIT_THREADS wins)")

    est = sub.add_parser("estimate", parents=[common], help="estimate from a CSV file")
    est.add_argument("--functional", help="ecc, missing_data_mean, weighted_avg_derivative, "
                                          "partially_linear_projection")
    est.add_argument("--data", help="CSV with y, a (or a1..ad), x1..xr (or w1..wr)")
    est.add_argument("--weight", help="derivative weight for the average derivative")
    est.add_argument("--rescale", action="store_true", default=None,
                     help="min-max scale covariates to [0, 1]")
    est.add_argument("--gate", action="store_true", default=None,
                     help="fail when a gram matrix is numerically singular")

    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo on a built-in process")
    sim.add_argument("--dgp")
    sim.add_argument("--n", type=int)
    sim.add_argument("--reps", type=int)

    rates = sub.add_parser("rates", parents=[common], help="RMSE rate sweep over sample sizes")
    rates.add_argument("--dgp")
    rates.add_argument("--ns", help="comma-separated increasing sample sizes")
    rates.add_argument("--reps", type=int)
    rates.add_argument("--k-c", dest="k_c", type=float, help="K = round(c * n**a): c")
    rates.add_argument("--k-a", dest="k_a", type=float, help="K = round(c * n**a): a")
    return parser


def parse_config(argv: list[str]) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    mode = ns.pop("mode")
    path = ns.pop("config")
    file_values = {}
    if path:
        try:
            file_values = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
        file_values.pop("mode", None)
    return config_from_sources(mode, ns, file_values)


def _emit_error(payload: dict) -> None:
    sys.stderr.write(json.dumps({"schema": SCHEMA, "error": _clean(payload)}, sort_keys=True) + "\n")


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        code, _ = run(parse_config(argv))
        return code
    except CrossfitError as exc:
        _emit_error(exc.to_dict())
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort machine-readable failure
        _emit_error({"code": "INTERNAL_ERROR", "message": f"{type(exc).__name__}: {exc}"})
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
