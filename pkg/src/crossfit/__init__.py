"""Cross-fit and doubly cross-fit series estimators of average linear functionals."""

from __future__ import annotations

from .basis import Basis, BasisSpec, build_basis, eval_basis, gauss_legendre_grid, integrate_weighted
from .errors import CrossfitError
from .estimators import (
    EstimateResult,
    cf_plugin,
    dr_estimate,
    dr_fixed,
    hoif_ecc,
    influence_se,
    pl_projection,
    plugin_no_split,
)
from .functionals import (
    Dataset,
    FunctionalKind,
    FunctionalSpec,
    IntegrationWeight,
    Observation,
    PolynomialBump,
    RaisedCosine,
    m_eval,
    oracle_alpha,
    v_eval,
)
from .linreg import GramSummary, SeriesFit, SeriesFunction, fit_regression, fit_riesz, gram, pinv_psd
from .simlab import (
    DgpSpec,
    EstimatorConfig,
    KRule,
    MonteCarloReport,
    RateReport,
    builtin_dgp,
    generate,
    rate_sweep,
    run_monte_carlo,
    true_beta,
)
from .splitting import (
    GroupSplit,
    SplitPlan,
    custom_plan,
    make_dcdr_plan,
    make_plugin_plan,
    make_single_cf_plan,
    validate_plan,
)

__version__ = "0.1.0"

__all__ = [
    "Basis", "BasisSpec", "build_basis", "eval_basis", "gauss_legendre_grid", "integrate_weighted",
    "CrossfitError",
    "EstimateResult", "cf_plugin", "dr_estimate", "dr_fixed", "hoif_ecc", "influence_se",
    "pl_projection", "plugin_no_split",
    "Dataset", "FunctionalKind", "FunctionalSpec", "IntegrationWeight", "Observation",
    "PolynomialBump", "RaisedCosine", "m_eval", "oracle_alpha", "v_eval",
    "GramSummary", "SeriesFit", "SeriesFunction", "fit_regression", "fit_riesz", "gram", "pinv_psd",
    "DgpSpec", "EstimatorConfig", "KRule", "MonteCarloReport", "RateReport", "builtin_dgp",
    "generate", "rate_sweep", "run_monte_carlo", "true_beta",
    "GroupSplit", "SplitPlan", "custom_plan", "make_dcdr_plan", "make_plugin_plan",
    "make_single_cf_plan", "validate_plan",
]
