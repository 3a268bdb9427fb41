"""Rank-1 bilinear logistic regression for matrix-valued covariates."""

from .errors import NumericalError, ValidationError
from .glram import GlramBases, glram_fit, glram_project, reconstruction_error
from .inference import (
    CovarianceEstimate,
    IntervalEstimate,
    covariance_estimate,
    probability_ci,
    theta_ci,
)
from .model import (
    MatrixDataset,
    StandardizationStats,
    ThetaParam,
    classify,
    linear_predictor,
    odds_ratio,
    repin_baseline,
    select_baseline_row,
    standardize,
    success_probability,
    vectorized_coefficient,
)
from .multiclass import (
    MultiClassDataset,
    MultiFitResult,
    ThetaMulti,
    class_probabilities,
    multiclass_covariance,
    multiclass_fit,
    multiclass_log_likelihood,
)
from .pipeline import (
    PcaBaselineResult,
    PipelineConfig,
    PipelineResult,
    apply_preprocessing,
    eeg_pipeline,
    pca_baseline,
    predict_with_model,
)
from .serialize import (
    ModelArtifact,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from .simulation import (
    SimDesign,
    SimReport,
    calibrate_arm_lambdas,
    empirical_kl,
    explained_proportion,
    generate_mv_data,
    generate_perturbed_data,
    reference_pattern,
    run_study,
    similarity,
)
from .solver import (
    ConventionalFitResult,
    FitConfig,
    FitResult,
    conventional_log_likelihood,
    fisher_hessian,
    fit,
    fit_conventional,
    gradient,
    hessian_cross_block,
    log_likelihood,
    penalty,
    select_lambda_cv,
    working_covariates,
)

__version__ = "0.1.0"
