"""Randomized multi-index sequential Monte Carlo for Bayesian inverse problems."""

from .estimators import (
    EstimateResult,
    EstimatorConfig,
    allocate_samples_deterministic,
    mismc_estimate,
    mlsmc_estimate,
    rmismc_estimate,
    single_level_estimate,
)
from .multiindex import (
    AllocationDistribution,
    IndexSet,
    SignedSubIndex,
    allocation_probability,
    enumerate_index_set,
    mixed_difference,
    sample_allocation,
    subindex_expansion,
)
from .rates import RateFit, estimate_increment_rates, fit_mse_cost, fit_rate
from .smc import (
    DegeneratePopulationError,
    IncrementEstimate,
    MutationConfig,
    SMCConfig,
    TemperingSchedule,
    run_smc,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationDistribution",
    "DegeneratePopulationError",
    "EstimateResult",
    "EstimatorConfig",
    "IncrementEstimate",
    "IndexSet",
    "MutationConfig",
    "RateFit",
    "SMCConfig",
    "SignedSubIndex",
    "TemperingSchedule",
    "allocate_samples_deterministic",
    "allocation_probability",
    "enumerate_index_set",
    "estimate_increment_rates",
    "fit_mse_cost",
    "fit_rate",
    "mismc_estimate",
    "mixed_difference",
    "mlsmc_estimate",
    "rmismc_estimate",
    "run_smc",
    "sample_allocation",
    "single_level_estimate",
    "subindex_expansion",
]
