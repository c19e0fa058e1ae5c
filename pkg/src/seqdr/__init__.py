"""seqdr: anytime-valid confidence sequences for means and doubly
robust treatment effects on streaming data."""

from .ate import (
    AteEngine,
    EmitRow,
    EngineConfig,
    InfluenceStats,
    Observation,
    UnadjustedEstimator,
    default_boundary,
    eval_influence,
    general_cs,
)
from .boundaries import (
    BoundarySpec,
    CsPoint,
    MartingaleState,
    fixed_ci_radius,
    lil_radius,
    mixture_martingale,
    mixture_radius,
    multivariate_cs,
    non_iid_radius,
    norm_quantile,
    tune_rho,
)
from .io import OUTPUT_HEADER, ParseError, format_row, parse_observation
from .numerics import (
    CovMoments,
    DataError,
    DomainError,
    PsdMatrix,
    RunningMoments,
    SeedSpec,
    expit,
    lambert_w,
)
from .nuisance import (
    LearnerSpec,
    NuisanceFit,
    fit_ensemble,
    fit_outcome,
    fit_propensity,
)
from .simlab import (
    MonteCarloReport,
    RepSummary,
    SimScenario,
    ate_report,
    generate,
    generate_stream,
    mu_star,
    run_ate_miscoverage,
    run_ate_study,
    run_miscoverage,
    width_table,
)
from .splitting import EVAL, TRAIN, NotReady, SplitLedger, SplitMode

__version__ = "0.1.0"

__all__ = [
    "AteEngine",
    "BoundarySpec",
    "CovMoments",
    "CsPoint",
    "DataError",
    "DomainError",
    "EmitRow",
    "EngineConfig",
    "EVAL",
    "InfluenceStats",
    "LearnerSpec",
    "MartingaleState",
    "MonteCarloReport",
    "NotReady",
    "NuisanceFit",
    "Observation",
    "OUTPUT_HEADER",
    "ParseError",
    "PsdMatrix",
    "RepSummary",
    "RunningMoments",
    "SeedSpec",
    "SimScenario",
    "SplitLedger",
    "SplitMode",
    "TRAIN",
    "UnadjustedEstimator",
    "ate_report",
    "default_boundary",
    "eval_influence",
    "expit",
    "fit_ensemble",
    "fit_outcome",
    "fit_propensity",
    "fixed_ci_radius",
    "format_row",
    "general_cs",
    "generate",
    "generate_stream",
    "lambert_w",
    "lil_radius",
    "mixture_martingale",
    "mixture_radius",
    "mu_star",
    "multivariate_cs",
    "non_iid_radius",
    "norm_quantile",
    "parse_observation",
    "run_ate_miscoverage",
    "run_ate_study",
    "run_miscoverage",
    "tune_rho",
    "width_table",
]
