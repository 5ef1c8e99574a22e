"""Closeness testing of discrete distributions from unequal-sized samples.

The package exposes the building blocks (distributions, statistics, moment
formulas), the three testers as scikit-learn style estimators, a Markov chain
mixing-time tester/estimator, and the desk-scale experiment drivers.
"""

from closeness.distributions import (
    CountVector,
    LowerBoundInstance,
    ProbabilityVector,
    l1_distance,
    make_lower_bound_pair,
    make_perturbed_uniform,
    make_uniform,
    sample_counts,
)
from closeness.exceptions import InvalidParameterError, NonConvergenceError
from closeness.statistics import (
    PartitionLabels,
    check_faithful,
    empirical_tv,
    expected_R,
    expected_W,
    expected_Z,
    partition_domain,
    stat_R,
    stat_V,
    stat_W,
    stat_Z,
    stat_Z_normalized,
    variance_W,
)
from closeness.testers import (
    ClosenessTester,
    Decision,
    TestConfig,
    calibrate_constants,
    plan_sample_sizes,
    run_test_basic,
    run_test_extreme,
    run_test_nonextreme,
    run_trials,
)

__version__ = "0.1.0"

__all__ = [
    "ClosenessTester",
    "CountVector",
    "Decision",
    "InvalidParameterError",
    "LowerBoundInstance",
    "NonConvergenceError",
    "PartitionLabels",
    "ProbabilityVector",
    "TestConfig",
    "calibrate_constants",
    "check_faithful",
    "empirical_tv",
    "expected_R",
    "expected_W",
    "expected_Z",
    "l1_distance",
    "make_lower_bound_pair",
    "make_perturbed_uniform",
    "make_uniform",
    "partition_domain",
    "plan_sample_sizes",
    "run_test_basic",
    "run_test_extreme",
    "run_test_nonextreme",
    "run_trials",
    "sample_counts",
    "stat_R",
    "stat_V",
    "stat_W",
    "stat_Z",
    "stat_Z_normalized",
    "variance_W",
]
