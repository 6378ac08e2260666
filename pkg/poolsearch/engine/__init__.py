from .search import (
    SearchRun, best_terminal, expansion_counts, finalize, initialize, run_best_of_n, run_round,
    run_search, run_self_consistency,
)

__all__ = [
    "SearchRun", "initialize", "run_round", "finalize", "best_terminal", "expansion_counts",
    "run_search", "run_best_of_n", "run_self_consistency",
]
