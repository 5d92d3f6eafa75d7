from ._core import (
    DataTable,
    Error,
    Pipeline,
    apply_pipeline,
    balanced_prior_bound,
    balanced_prior_ok,
    default_config,
    expected_improvement,
    fit_pipeline,
    known_learners,
    load_dataset,
    meta_feature_names,
    meta_features,
    pareto_select,
    run,
    simulate_neutral,
    split,
    train_and_score,
    validate_step,
)

__all__ = [
    "DataTable",
    "Error",
    "Pipeline",
    "apply_pipeline",
    "balanced_prior_bound",
    "balanced_prior_ok",
    "default_config",
    "expected_improvement",
    "fit_pipeline",
    "known_learners",
    "load_dataset",
    "meta_feature_names",
    "meta_features",
    "pareto_select",
    "run",
    "simulate_neutral",
    "split",
    "train_and_score",
    "validate_step",
]
