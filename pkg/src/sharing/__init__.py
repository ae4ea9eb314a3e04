"""Sharing-chain simulation and off-policy treatment-effect estimators."""

from sharing.core import (
    AteMatrix,
    Dataset,
    ProductionPolicy,
    SessionRecord,
    SharingMdpConfig,
    Trajectory,
    flatten,
    validate_config,
)
from sharing.estimators import (
    EstimatorKind,
    GammaEstimate,
    diff_in_geometrics_ate,
    diff_in_qs_ate,
    estimate_all,
    estimate_gamma,
    naive_ate,
    pairwise_ates,
)
from sharing.experiment import SweepPlan, SweepResult, ci95, run_sweep
from sharing.oracle import true_ate_matrix, true_value, truncated_series_value
from sharing.simulator import (
    MisspecificationKnob,
    RolloutPolicy,
    SimulationSeed,
    monte_carlo_value,
    sample_dataset,
    sample_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "AteMatrix",
    "Dataset",
    "EstimatorKind",
    "GammaEstimate",
    "MisspecificationKnob",
    "ProductionPolicy",
    "RolloutPolicy",
    "SessionRecord",
    "SharingMdpConfig",
    "SimulationSeed",
    "SweepPlan",
    "SweepResult",
    "Trajectory",
    "ci95",
    "diff_in_geometrics_ate",
    "diff_in_qs_ate",
    "estimate_all",
    "estimate_gamma",
    "flatten",
    "monte_carlo_value",
    "naive_ate",
    "pairwise_ates",
    "run_sweep",
    "sample_dataset",
    "sample_trajectory",
    "true_ate_matrix",
    "true_value",
    "truncated_series_value",
    "validate_config",
]
