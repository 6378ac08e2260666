"""Adaptive power and mixture schedules for Power Backtrack SMC.

Indexing: round t weighs with (beta_{t-1}, beta_t). beta_0 seeds W_0 = r^beta_0;
after the pool P_t is weighted, beta_{t+1} = beta_t + Delta_t(P_t). The state
entering round t therefore holds beta_previous = beta_{t-1} and
beta_current = beta_t.
"""
from __future__ import annotations
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from ..models import ScheduleParams


class ScheduleState(BaseModel):
    beta_current: float = Field(ge=0)
    beta_previous: float = Field(ge=0)
    gamma: float = Field(gt=0)
    g_min: float = Field(gt=0, le=1)
    g_max: float = 1.0
    horizon: int = Field(gt=0)
    round: int = 0
    adaptive: bool = True
    alpha_fixed: Optional[float] = None


def concentration_statistic(scores) -> float:
    """sigma = sum of squared normalized scores, in [1/C, 1]."""
    r = np.asarray(scores, dtype=np.float64)
    c = r.size
    if c == 0:
        raise ValueError("concentration of an empty pool")
    a = r / r.sum()
    sigma = float(np.dot(a, a))
    return min(1.0, max(1.0 / c, sigma))


def beta_increment(gamma: float, sigma: float, c: int) -> float:
    """Delta = gamma * (1 - (sigma - 1/C)), kept inside [gamma/C, gamma]."""
    lo, hi = gamma / c, gamma
    return min(hi, max(lo, gamma * (1.0 - (sigma - 1.0 / c))))


def beta_step(state: ScheduleState, sigma: float, c: int) -> float:
    return state.beta_current + beta_increment(state.gamma, sigma, c)


def alpha_at(state: ScheduleState, t: int) -> float:
    """alpha_t = 1 / (1 + g_t), g_t falling linearly from g_max to g_min over the horizon."""
    if state.alpha_fixed is not None:
        return state.alpha_fixed
    T = state.horizon
    if T == 1:
        g = state.g_min
    else:
        g = state.g_max - ((t - 1) / (T - 1)) * (state.g_max - state.g_min)
    return 1.0 / (1.0 + g)


def initial_state(params: ScheduleParams, horizon: int, initial_scores) -> ScheduleState:
    """State entering round 1: (beta_0, beta_1) with beta_1 stepped from P_0."""
    state = ScheduleState(
        beta_current=params.beta0, beta_previous=params.beta0, gamma=params.gamma,
        g_min=params.g_min, g_max=params.g_max, horizon=horizon, round=0,
        adaptive=params.adaptive_beta, alpha_fixed=params.alpha,
    )
    return advance(state, initial_scores)


def advance(state: ScheduleState, pool_scores) -> ScheduleState:
    nxt = state.beta_current
    if state.adaptive:
        scores = np.asarray(pool_scores, dtype=np.float64)
        nxt = beta_step(state, concentration_statistic(scores), scores.size)
    return state.model_copy(update={
        "beta_previous": state.beta_current, "beta_current": nxt, "round": state.round + 1,
    })
