from __future__ import annotations
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..errors import AllWeightsZero, SubsampleTooLarge


class Pool(BaseModel):
    """Ordered weighted multiset of PrefixIds (the search state P_t with W_t).

    `weights` are linear by default; when `log_space` is set they hold natural
    logs and a zero weight is -inf.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    ids: np.ndarray
    weights: np.ndarray
    round: int = 0
    log_space: bool = False

    @field_validator("ids", mode="before")
    @classmethod
    def _ids(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=np.int64).reshape(-1)

    @field_validator("weights", mode="before")
    @classmethod
    def _weights(cls, v) -> np.ndarray:
        return np.asarray(v, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def _check(self) -> "Pool":
        if self.ids.shape != self.weights.shape:
            raise ValueError(f"{self.ids.size} ids but {self.weights.size} weights")
        if np.isnan(self.weights).any():
            raise ValueError("NaN weight")
        if not self.log_space and (self.weights < 0).any():
            raise ValueError("linear weights must be nonnegative")
        return self

    @classmethod
    def empty(cls, round: int = 0) -> "Pool":
        return cls(ids=[], weights=[], round=round)

    def __len__(self) -> int:
        return int(self.ids.size)

    def linear_weights(self) -> np.ndarray:
        """Weights in linear space, rescaled by the max when stored as logs."""
        if not self.log_space:
            return self.weights
        if self.weights.size == 0 or not np.isfinite(self.weights).any():
            return np.zeros_like(self.weights)
        return np.exp(self.weights - self.weights.max())

    def positive_mask(self) -> np.ndarray:
        return np.isfinite(self.weights) if self.log_space else self.weights > 0

    def to_log(self) -> "Pool":
        if self.log_space:
            return self
        with np.errstate(divide="ignore"):
            logs = np.log(self.weights)
        return Pool(ids=self.ids, weights=logs, round=self.round, log_space=True)


def pool_union(a: Pool, b: Pool) -> Pool:
    """Persistent union a ⊎ b: entries of b appended after a."""
    if a.log_space != b.log_space:
        a, b = a.to_log(), b.to_log()
    return Pool(
        ids=np.concatenate([a.ids, b.ids]),
        weights=np.concatenate([a.weights, b.weights]),
        round=max(a.round, b.round),
        log_space=a.log_space,
    )


def _probabilities(p: Pool) -> np.ndarray:
    if len(p) == 0:
        raise AllWeightsZero("empty pool")
    if p.log_space and not np.isfinite(p.weights).any():
        raise AllWeightsZero("all log-weights are -inf")
    w = p.linear_weights()
    total = float(np.sum(w))
    if not total > 0 or not np.isfinite(total):
        raise AllWeightsZero(f"total weight {total}")
    return w / total


def normalize_weights(p: Pool) -> Pool:
    return Pool(ids=p.ids, weights=_probabilities(p), round=p.round)


def top_m_select(p: Pool, m: int) -> List[int]:
    """The m highest-weight entries: weight desc, then position asc, then PrefixId asc."""
    n = len(p)
    if n == 0:
        return []
    order = np.lexsort((p.ids, np.arange(n), -p.weights))
    return p.ids[order[:m]].tolist()


def multinomial_positions(p: Pool, k: int, rng: np.random.Generator) -> np.ndarray:
    """k i.i.d. draws of pool positions with probability proportional to weight."""
    prob = _probabilities(p)
    cdf = np.cumsum(prob)
    last = int(np.flatnonzero(prob > 0)[-1])
    pos = np.searchsorted(cdf, rng.random(k) * cdf[-1], side="right")
    return np.minimum(pos, last)


def multinomial_sample(p: Pool, k: int, rng: np.random.Generator) -> List[int]:
    return p.ids[multinomial_positions(p, k, rng)].tolist()


def uniform_subsample(p: Pool, k: int, rng: np.random.Generator) -> Pool:
    """k distinct positions drawn uniformly without replacement, kept in pool order."""
    n = len(p)
    if k > n:
        raise SubsampleTooLarge(f"k={k} exceeds pool size {n}")
    if k == n:
        return p
    pos = np.sort(rng.choice(n, size=k, replace=False))
    return Pool(ids=p.ids[pos], weights=p.weights[pos], round=p.round, log_space=p.log_space)
