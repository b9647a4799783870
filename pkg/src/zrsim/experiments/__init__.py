"""Monte Carlo harness: experiment configs, reports, estimators and the CLI."""

from .harness import (
    DEFAULTS,
    EXPERIMENTS,
    TOL,
    ExperimentConfig,
    InvalidConfig,
    ReplicaFailed,
    Report,
    run_experiment,
    run_replicas,
    validate,
)
from .report import IoFailure, emit, from_json, load_report, render, to_json
from .stats import (
    ECDF,
    TruncationTooSmall,
    WeightedSum,
    binomial_estimate,
    estimate_weighted_sum,
    ks_distance,
    labels_needed,
    mean_se,
)

__all__ = [
    "DEFAULTS", "EXPERIMENTS", "TOL", "ExperimentConfig", "InvalidConfig", "ReplicaFailed", "Report",
    "run_experiment", "run_replicas", "validate", "IoFailure", "emit", "from_json", "load_report", "render",
    "to_json", "ECDF", "TruncationTooSmall", "WeightedSum", "binomial_estimate", "estimate_weighted_sum",
    "ks_distance", "labels_needed", "mean_se",
]
