"""Empirical PCA on truncated Karhunen-Loeve models with prescribed
eigenvalue decay: exact evaluation of high-probability reconstruction-error
bounds and their Monte Carlo verification."""

__version__ = "0.1.0"

from .bounds import (
    BoundConstants,
    BoundReport,
    DimensionBound,
    HansonWrightTerms,
    NearExponentialSelection,
    RatioEnvelope,
    RelativeRankBound,
    bound_report,
    davis_kahan_bound,
    davis_kahan_excess,
    dimension_bound,
    eigenvalue_ratio_envelope,
    hanson_wright_terms,
    hw_deviation_probability,
    near_exponential_dprime,
    rate_envelope,
    ratio_envelope_holds,
    relative_rank_bound,
    select_dprime,
)
from .errors import (
    ConfigError,
    DegenerateGapError,
    NumericError,
    ParameterError,
    RangeError,
    UnsupportedProfileError,
)
from .montecarlo import (
    ExperimentConfig,
    HwCheckReport,
    ReplicateRecord,
    SummaryRow,
    TailEstimate,
    calibrate_hw_constant,
    clopper_pearson,
    empirical_constant,
    exact_cross_expectation,
    hw_expectation_check,
    hw_tail_inequality_holds,
    run_experiment,
    summarize,
    tail_probability,
)
from .pca import (
    PcaFit,
    PerturbationStats,
    empirical_reconstruction_error,
    event_indicator,
    fit,
    perturbation_stats,
    population_projection_error,
    reconstruction_error,
)
from .sampler import (
    GAUSSIAN,
    RADEMACHER,
    UNIFORM_SYM,
    CoefficientLaw,
    MomentCheckReport,
    SampleBatch,
    draw_batch,
    empirical_covariance,
    law_from_tag,
    load_batch,
    moment_check,
    save_batch,
)
from .spectra import (
    EigenvalueProfile,
    Explicit,
    Exponential,
    Polynomial,
    SpectralModel,
    WeightedOperatorStats,
    materialize,
    resolvent_tail_sum,
    suggest_truncation,
    tail_sum,
    weighted_operator_stats,
)
