"""Adaptive Gaussian classification with hidden-class discovery.

Learn a parsimonious Gaussian classifier on labelled data, then adapt it to
test data that may contain classes never seen in training and extra
variables recorded only at test time. Hidden-class counts are chosen by BIC
and a greedy BIC search selects the variables worth keeping.
"""

from .discovery import (
    DamdaModel,
    bic_h,
    e_step,
    inductive_conditional_update,
    initialize,
    regularize_scatter,
    run_em,
    select_h,
)
from .edda import EddaModel, fit_edda, load_model, marginal_submodel, predict_map, save_model
from .gaussian import (
    GaussianParams,
    InvalidAugmentedCovariance,
    NotPositiveDefinite,
    PartitionedCov,
    assemble_cov,
    kl_match_score,
    log_density,
)
from .simulate import GeneratedWorld, ScenarioConfig, ari, generate_world, matched_error, sample_wishart
from .varsel import SearchConfig, SelectionResult, greedy_search, rank_initial_subset, stepwise_regression_bic

__version__ = "0.1.0"

__all__ = [
    "DamdaModel",
    "EddaModel",
    "GaussianParams",
    "GeneratedWorld",
    "InvalidAugmentedCovariance",
    "NotPositiveDefinite",
    "PartitionedCov",
    "ScenarioConfig",
    "SearchConfig",
    "SelectionResult",
    "ari",
    "assemble_cov",
    "bic_h",
    "e_step",
    "fit_edda",
    "generate_world",
    "greedy_search",
    "inductive_conditional_update",
    "initialize",
    "kl_match_score",
    "load_model",
    "log_density",
    "marginal_submodel",
    "matched_error",
    "predict_map",
    "rank_initial_subset",
    "regularize_scatter",
    "run_em",
    "sample_wishart",
    "save_model",
    "select_h",
    "stepwise_regression_bic",
]
