"""Parent-selection rules f_t and memory updates G_t for the non-PB-SMC methods."""
from __future__ import annotations
import math
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..core.arena import PrefixArena
from ..core.pool import Pool, multinomial_sample, pool_union, top_m_select, uniform_subsample
from ..models import MethodSpec

_LOG_RATIO_BELOW = 1e-6


def select_beam(pool: Pool, m: int) -> List[int]:
    return top_m_select(pool, m)


def select_smc_parents(pool: Pool, n: int, rng: np.random.Generator) -> List[int]:
    return multinomial_sample(pool, n, rng)


def smc_incremental_weight(prm: float, parent_prm: float = 1.0) -> float:
    """r(z) / r(pa(z)); the root prompt scores 1."""
    if prm < _LOG_RATIO_BELOW or parent_prm < _LOG_RATIO_BELOW:
        return math.exp(math.log(prm) - math.log(parent_prm))
    return prm / parent_prm


def smc_incremental_weights(arena: PrefixArena, ids: Sequence[int], t: Optional[int] = None) -> np.ndarray:
    """r / r_pa per entry. With round `t`, terminals of depth <= t are frozen copies and weigh 1."""
    r = arena.prm_array(ids)
    rpa = arena.parent_prm_array(ids)
    tiny = (r < _LOG_RATIO_BELOW) | (rpa < _LOG_RATIO_BELOW)
    out = r / rpa
    if tiny.any():
        out[tiny] = np.exp(np.log(r[tiny]) - np.log(rpa[tiny]))
    if t is not None:
        out[arena.terminal_array(ids) & (arena.depth_array(ids) <= t)] = 1.0
    return out


def adaptive_rho(pool: Pool, arena: PrefixArena) -> float:
    """Mean clamped PRM score over the pool, duplicates counted."""
    return float(np.mean(arena.prm_array(pool.ids)))


def subpool_size(pool_size: int, m: int, rho: float) -> int:
    return min(pool_size, max(m, math.floor(rho * pool_size)))


def select_sps(pool: Pool, m: int, rho: float, rng: np.random.Generator) -> List[int]:
    """Top-M inside a uniform subpool of size max(M, floor(rho*|P|)), capped at |P|."""
    if not 0 < rho <= 1:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    k = subpool_size(len(pool), m, rho)
    return top_m_select(uniform_subsample(pool, k, rng), m)


def memory_update(
    spec: MethodSpec,
    old_pool: Pool,
    children: Sequence[int],
    weights_fn: Callable[..., Pool],
    *,
    retained: Optional[Sequence[int]] = None,
) -> Pool:
    """G_t: frontier methods keep the weighted children, Greedy/SPS append them to
    the persistent pool, backtracking SMC hands the retained draws to `weights_fn`."""
    if spec.retains_history:
        return weights_fn(children, retained if retained is not None else [])
    frontier = weights_fn(children)
    if spec.persistent_union:
        return pool_union(old_pool, frontier)
    return frontier
