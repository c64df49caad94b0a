"""Multiple hypothesis testing with internal negative controls."""

__version__ = "0.1.0"

from .data import (
    StatisticSet,
    TieReport,
    load_csv,
    make_statistic_set,
    tie_report,
    to_json,
    to_json_dict,
    with_jitter,
)
from .errors import DataError
from .localfdr import (
    LocalFdrCurve,
    LocalFdrResult,
    bayes_risk_curves,
    cdf_threshold,
    cdf_threshold_orderstat,
    localfdr_curve,
    neighborhood_threshold,
    pdf_localfdr_baseline,
)
from .nullfit import (
    FalsificationReport,
    NullModel,
    UniformityReport,
    falsify_subgroups,
    fit_efron,
    fit_mad1,
    fit_mad2,
    fit_nc_ecdf,
    mad_scale,
    null_diagnostics_table,
    pvalues_from_null,
    uniformity_tests,
)
from .procedures import (
    RejectionResult,
    bh,
    bonferroni_global,
    confusion_counts,
    fisher_global_statistic,
    hochberg,
    holm,
    lehmann_romano,
    permutation_global,
    simes_global,
    simes_statistic,
)
from .ranc import (
    PValueVector,
    empirical_null_cdf,
    modified_ranc_pvalues,
    modified_ranc_values,
    ranc_pvalues,
    ranc_values,
)
from .simulate import (
    SimConfig,
    SimReport,
    fisher_miscalibration_demo,
    generate_emn,
    oracle_pvalues,
    power_vs_m,
    prds_counterexample,
    rule_of_thumb_m,
    run_table1,
    simes_permutation_diagnostic,
    simulate_cell,
)
from .stepup import (
    FdrStepupResult,
    StepCurve,
    bh_equivalence_check,
    fdr_hat,
    pi_hat,
    stepup_threshold,
)

__all__ = [
    "DataError",
    "FalsificationReport",
    "FdrStepupResult",
    "LocalFdrCurve",
    "LocalFdrResult",
    "NullModel",
    "PValueVector",
    "RejectionResult",
    "SimConfig",
    "SimReport",
    "StatisticSet",
    "StepCurve",
    "TieReport",
    "UniformityReport",
    "bayes_risk_curves",
    "bh",
    "bh_equivalence_check",
    "bonferroni_global",
    "cdf_threshold",
    "cdf_threshold_orderstat",
    "confusion_counts",
    "empirical_null_cdf",
    "falsify_subgroups",
    "fdr_hat",
    "fisher_global_statistic",
    "fisher_miscalibration_demo",
    "fit_efron",
    "fit_mad1",
    "fit_mad2",
    "fit_nc_ecdf",
    "generate_emn",
    "hochberg",
    "holm",
    "lehmann_romano",
    "load_csv",
    "localfdr_curve",
    "mad_scale",
    "make_statistic_set",
    "modified_ranc_pvalues",
    "modified_ranc_values",
    "neighborhood_threshold",
    "null_diagnostics_table",
    "oracle_pvalues",
    "pdf_localfdr_baseline",
    "permutation_global",
    "pi_hat",
    "power_vs_m",
    "prds_counterexample",
    "pvalues_from_null",
    "ranc_pvalues",
    "ranc_values",
    "rule_of_thumb_m",
    "run_table1",
    "simes_global",
    "simes_permutation_diagnostic",
    "simes_statistic",
    "simulate_cell",
    "stepup_threshold",
    "tie_report",
    "to_json",
    "to_json_dict",
    "uniformity_tests",
    "with_jitter",
]
