from .checks import (
    CheckResult, correction_factor_residual, mis_identity_check, mis_identity_residual,
    normalization_residual, run_oracle_suite, shared_normalizer_residual, sigma_additivity_residual,
)
from .probe import ProbePoint, convergence_probe, probe_env
from .table import OracleTable, blocker_predicate, enumerate_env, highest_sigma_row, highest_target_row, log_total

__all__ = [
    "OracleTable", "enumerate_env", "blocker_predicate", "highest_sigma_row", "highest_target_row", "log_total",
    "mis_identity_residual", "mis_identity_check", "shared_normalizer_residual",
    "correction_factor_residual", "normalization_residual", "sigma_additivity_residual",
    "CheckResult", "run_oracle_suite", "ProbePoint", "convergence_probe", "probe_env",
]
