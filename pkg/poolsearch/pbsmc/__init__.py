from .schedule import ScheduleState, advance, alpha_at, beta_increment, beta_step, concentration_statistic, initial_state
from .weights import (
    MixtureWeightInputs, assign_pbsmc_weights, correction_factor, log_correction_factors, sample_retained,
)

__all__ = [
    "ScheduleState", "initial_state", "advance", "concentration_statistic", "beta_increment",
    "beta_step", "alpha_at", "MixtureWeightInputs", "correction_factor", "log_correction_factors",
    "assign_pbsmc_weights", "sample_retained",
]
