from .arena import PrefixArena
from .pool import (
    Pool, multinomial_sample, normalize_weights, pool_union, top_m_select, uniform_subsample,
)
from .scoring import clamp_score, clamp_scores

__all__ = [
    "PrefixArena", "Pool", "pool_union", "normalize_weights", "top_m_select",
    "multinomial_sample", "uniform_subsample", "clamp_score", "clamp_scores",
]
