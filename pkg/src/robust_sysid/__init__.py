"""Robust identification of partially observed LTI systems under heavy-tailed noise."""

from .distributions import DistributionSpec, kurtosis_ratio, sample_vector
from .errors import (
    ConfigurationError,
    ExcitationDeficiencyError,
    InsufficientRolloutsError,
    NonConvergenceError,
    OrderTooHighError,
)
from .estimator import (
    BoostedEstimate,
    BucketPlan,
    RegressionBlock,
    bucket_count,
    estimate,
    lemma_diagnostics,
    ols_bucket,
    plan_buckets,
    single_ols,
    theorem1_bound,
    toeplitz_input,
)
from .geomedian import geometric_median, weiszfeld
from .harness import ExperimentConfig, run_delta_sweep, run_experiment
from .lti import (
    Dataset,
    LtiSystem,
    Rollout,
    default_system,
    f_matrix_norm,
    simulate_dataset,
    simulate_rollout,
    true_markov,
)
from .realization import RealizationResult, ho_kalman, realization_error

__version__ = "0.1.0"
