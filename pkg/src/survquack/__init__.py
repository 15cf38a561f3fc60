"""Two-arm survival analysis where the overall answer must make sense.

The toolkit pairs standard machinery (product-limit curves, log-rank,
Cox and Weibull fits) with aggregation that mixes each arm's survival
over subgroup prevalences before forming any ratio, a Monte Carlo study
of directional errors made by test-then-read-the-medians reasoning, and
a rank-test confidence set for the survival-curve power parameter.
"""

from ._version import __version__
from .dist import (
    LehmannCurve,
    LehmannPair,
    MixtureCurve,
    SurvivalCurve,
    WeibullDist,
    lehmann_transform,
    quantile,
    sample_times,
    solve_complement_scale,
    survival_at,
    weibull_from_median,
)
from .errors import (
    NOT_REACHED,
    DomainError,
    InfeasibleScenario,
    NotReachedError,
    NumericalError,
    SurvquackError,
    UnsupportedCensoring,
    ValidationError,
)
from .estim import (
    ARM_C,
    ARM_RX,
    EfficacySummary,
    KMCurve,
    Measure,
    SurvivalSample,
    cox_fit_two_arm,
    empirical_llp,
    hr_from_llp,
    hr_to_tr,
    km_fit,
    km_median,
    llp_from_hr,
    sample_tr,
    tr_to_hr,
    weibull_mle,
)
from .fixtures import (
    OakAnalogSpec,
    generate_prognostic_sample,
    load_oak_analog_spec,
    write_dataset_csv,
)
from .infer import (
    Claim,
    ConfidenceSet,
    DecisionOutcome,
    LogRankResult,
    decision_procedure,
    logrank_test,
    mw_pair_count,
    mw_pivot_ci,
    wald_test_cox,
    wald_test_weibull,
)
from .rng import derive_rng
from .sim import (
    DEFAULT_MASTER_SEED,
    DirectionalErrorReport,
    RealizedScenario,
    ScenarioConfig,
    SubgroupSpec,
    build_section3_scenario,
    realize_scenario,
    run_replication,
    run_study,
    sweep,
)
from .sme import (
    QuadraturePolicy,
    SubgroupRow,
    SubgroupTable,
    StratifiedComparison,
    mixture_llp,
    naive_stratified_ratio,
    sme_overall_hr,
    sme_overall_rr,
    sme_overall_tr,
    stratified_audit,
)

__all__ = [
    "__version__",
    "ARM_C",
    "ARM_RX",
    "Claim",
    "ConfidenceSet",
    "DEFAULT_MASTER_SEED",
    "DecisionOutcome",
    "DirectionalErrorReport",
    "DomainError",
    "EfficacySummary",
    "InfeasibleScenario",
    "KMCurve",
    "LehmannCurve",
    "LehmannPair",
    "LogRankResult",
    "Measure",
    "MixtureCurve",
    "NOT_REACHED",
    "NotReachedError",
    "NumericalError",
    "OakAnalogSpec",
    "QuadraturePolicy",
    "RealizedScenario",
    "ScenarioConfig",
    "StratifiedComparison",
    "SubgroupRow",
    "SubgroupSpec",
    "SubgroupTable",
    "SurvivalCurve",
    "SurvivalSample",
    "SurvquackError",
    "UnsupportedCensoring",
    "ValidationError",
    "WeibullDist",
    "build_section3_scenario",
    "cox_fit_two_arm",
    "decision_procedure",
    "derive_rng",
    "empirical_llp",
    "generate_prognostic_sample",
    "hr_from_llp",
    "hr_to_tr",
    "km_fit",
    "km_median",
    "lehmann_transform",
    "llp_from_hr",
    "load_oak_analog_spec",
    "logrank_test",
    "mixture_llp",
    "mw_pair_count",
    "mw_pivot_ci",
    "naive_stratified_ratio",
    "quantile",
    "realize_scenario",
    "run_replication",
    "run_study",
    "sample_times",
    "sample_tr",
    "sme_overall_hr",
    "sme_overall_rr",
    "sme_overall_tr",
    "solve_complement_scale",
    "stratified_audit",
    "survival_at",
    "sweep",
    "tr_to_hr",
    "wald_test_cox",
    "wald_test_weibull",
    "weibull_from_median",
    "weibull_mle",
    "write_dataset_csv",
]
