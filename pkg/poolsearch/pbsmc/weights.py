"""Mixture-corrected importance weights for Power Backtrack SMC.

Round t draws N new children (one per parent resampled from P_{t-1}) and a
retained multiset S_t of N*t historical entries. Against the powered target
p(z) r(z)^beta_t on prefixes of length <= t+1, each entry carries

    F_t(z) = (r/r_pa)^{beta_{t-1}} r^{beta_t - beta_{t-1}}
             / [alpha_t 1{len >= 2} + (1 - alpha_t) (r/r_pa)^{beta_{t-1}} 1{len <= t}]

A terminal of length <= t also reaches B_t as a frozen copy, so the
history coefficient in its denominator is 1 rather than (1 - alpha_t).
Without retained history parents sit at depth t, so a frozen terminal is
only ever a copy and carries r^{beta_t - beta_{t-1}} / alpha_t.
The pool weight is alpha_t F_t for children, (1 - alpha_t) F_t / t for
retained entries. Everything is evaluated on logs; log r >= log R_MIN.
"""
from __future__ import annotations
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..config import LOG_SPACE_BETA
from ..core.arena import PrefixArena
from ..core.pool import Pool, multinomial_sample
from ..errors import BudgetMismatch, InvalidLength


class MixtureWeightInputs(BaseModel):
    prm_score: float = Field(gt=0, le=1)
    parent_prm: float = Field(1.0, gt=0, le=1)
    length: int
    round: int = Field(ge=1)
    alpha: float = Field(gt=0, le=1)
    beta: float = Field(ge=0)
    beta_prev: float = Field(ge=0)
    terminal: bool = False


def log_correction_factors(
    r: np.ndarray,
    r_parent: np.ndarray,
    lengths: np.ndarray,
    t: int,
    alpha: float,
    beta_prev: float,
    beta: float,
    retain_history: bool = True,
    terminal: Optional[np.ndarray] = None,
) -> np.ndarray:
    """log F_t for each entry. Without retained history the denominator is alpha_t.

    `terminal` flags entries that stop; those of length <= t are frozen copies.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    bad = (lengths < 1) | (lengths > t + 1)
    if bad.any():
        raise InvalidLength(f"lengths {sorted(set(lengths[bad].tolist()))} outside [1, {t + 1}] at round {t}")
    lr = np.log(np.asarray(r, dtype=np.float64))
    log_ratio = lr - np.log(np.asarray(r_parent, dtype=np.float64))
    log_num = beta_prev * log_ratio + (beta - beta_prev) * lr
    frozen = np.zeros(lengths.shape, dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool)
    frozen = frozen & (lengths <= t)
    if not retain_history:
        return np.where(frozen, (beta - beta_prev) * lr, log_num) - math.log(alpha)

    log_alpha = math.log(alpha)
    log_rest = math.log1p(-alpha) if alpha < 1 else -math.inf
    new_term = np.where(lengths >= 2, log_alpha, -np.inf)
    hist_coef = np.where(frozen, 0.0, log_rest)
    hist_term = np.where(lengths <= t, hist_coef + beta_prev * log_ratio, -np.inf)
    log_den = np.logaddexp(new_term, hist_term)
    if not np.isfinite(log_den).all():
        raise InvalidLength(f"zero mixture density at round {t} (alpha={alpha})")
    return log_num - log_den


def correction_factor(inputs: MixtureWeightInputs, retain_history: bool = True) -> float:
    log_f = log_correction_factors(
        np.array([inputs.prm_score]), np.array([inputs.parent_prm]), np.array([inputs.length]),
        inputs.round, inputs.alpha, inputs.beta_prev, inputs.beta, retain_history,
        np.array([inputs.terminal]),
    )
    return float(np.exp(log_f[0]))


def sample_retained(pool: Pool, t: int, n: int, rng: np.random.Generator) -> List[int]:
    """S_t: N*t draws with replacement from P_{t-1} in proportion to W_{t-1}."""
    return multinomial_sample(pool, n * t, rng)


def assign_pbsmc_weights(
    retained: Sequence[int],
    children: Sequence[int],
    arena: PrefixArena,
    t: int,
    n: int,
    alpha: float,
    beta_prev: float,
    beta: float,
    retain_history: bool = True,
) -> Pool:
    """P_t = S_t ⊎ B_t with mixture-corrected weights."""
    s_ids = np.asarray(retained, dtype=np.int64).reshape(-1)
    b_ids = np.asarray(children, dtype=np.int64).reshape(-1)
    expected_s = n * t if retain_history else 0
    if b_ids.size != n or s_ids.size != expected_s:
        raise BudgetMismatch(f"|S_t|={s_ids.size}, |B_t|={b_ids.size}; expected {expected_s} and {n} at t={t}")
    if retain_history and alpha >= 1:
        raise ValueError("retained history needs alpha < 1")

    ids = np.concatenate([s_ids, b_ids])
    log_f = log_correction_factors(
        arena.prm_array(ids), arena.parent_prm_array(ids), arena.depth_array(ids),
        t, alpha, beta_prev, beta, retain_history, arena.terminal_array(ids),
    )
    log_w = np.empty_like(log_f)
    ns = s_ids.size
    if ns:
        log_w[:ns] = math.log1p(-alpha) + log_f[:ns] - math.log(t)
    log_w[ns:] = math.log(alpha) + log_f[ns:]

    log_space = beta > LOG_SPACE_BETA
    return Pool(ids=ids, weights=log_w if log_space else np.exp(log_w), round=t, log_space=log_space)
