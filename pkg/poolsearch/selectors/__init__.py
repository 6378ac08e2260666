from .rules import (
    adaptive_rho, memory_update, select_beam, select_smc_parents, select_sps,
    smc_incremental_weight, smc_incremental_weights, subpool_size,
)

__all__ = [
    "select_beam", "select_smc_parents", "smc_incremental_weight", "smc_incremental_weights",
    "adaptive_rho", "subpool_size", "select_sps", "memory_update",
]
