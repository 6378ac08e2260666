from __future__ import annotations
import math
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..config import ENUM_CAP
from ..errors import ConstructionFailed, EnvTooLarge
from ..models import Child, Prefix
from ..core.scoring import clamp_scores
from .base import Backend

CORRECT = 0          # answer code of every correct terminal
NOT_TERMINAL = -1


def answer_label(code: int) -> str:
    return f"ans{int(code)}"


def level_sizes(branching: int, depth: int) -> List[int]:
    return [branching ** d for d in range(depth + 1)]


class SyntheticTreeEnv:
    """Finite reasoning tree with an exact expansion kernel and a noisy PRM.

    The tree is stored level by level: node i at depth d has children
    i*b + k at depth d+1. `probs[d]` has shape (b**d, b) and is the step
    distribution of every node at depth d < D. Nodes at depth D are always
    terminal; earlier nodes may be terminal too, and nothing below a terminal
    node is reachable.

    PRM model: prm = clamp(w * v + (1 - w) * u + bias), where v is the
    probability that a rollout from the node ends correct, u is node-seeded
    uniform noise and bias a per-node offset.
    """

    def __init__(
        self,
        branching: int,
        depth: int,
        probs: Sequence[np.ndarray],
        answers: Sequence[np.ndarray],
        *,
        noise_weight: float = 1.0,
        noise: Optional[Sequence[np.ndarray]] = None,
        bias: Optional[Sequence[np.ndarray]] = None,
        env_seed: int = 0,
        cap: int = ENUM_CAP,
        flagged: Optional[Tuple[int, int]] = None,
    ) -> None:
        if branching < 1 or depth < 1:
            raise ValueError("branching and depth must be positive")
        sizes = level_sizes(branching, depth)
        if sum(sizes) > cap:
            raise EnvTooLarge(f"{sum(sizes)} nodes exceed the cap of {cap}")
        if not 0.0 <= noise_weight <= 1.0:
            raise ValueError("noise_weight must be in [0, 1]")

        self.branching = branching
        self.depth = depth
        self.env_seed = env_seed
        self.noise_weight = float(noise_weight)
        self.flagged = flagged
        self.blockers: List[Tuple[int, int]] = []

        self.probs: List[np.ndarray] = []
        for d in range(depth):
            p = np.asarray(probs[d], dtype=np.float64).reshape(sizes[d], branching)
            if (p < 0).any():
                raise ValueError(f"negative step probability at depth {d}")
            p = p / p.sum(axis=1, keepdims=True)
            if np.abs(p.sum(axis=1) - 1.0).max() > 1e-12:
                raise ValueError(f"step probabilities at depth {d} do not sum to 1")
            self.probs.append(p)
        with np.errstate(divide="ignore"):
            self.log_probs = [np.log(p) for p in self.probs]

        self.answers: List[np.ndarray] = [np.full(1, NOT_TERMINAL, dtype=np.int64)]
        for d in range(1, depth + 1):
            a = np.asarray(answers[d], dtype=np.int64).reshape(sizes[d])
            if d == depth and (a == NOT_TERMINAL).any():
                raise ValueError("every node at the maximum depth must carry an answer")
            self.answers.append(a)
        self.terminal = [a != NOT_TERMINAL for a in self.answers]

        zeros = [np.zeros(s) for s in sizes]
        self.noise = [np.asarray(x, dtype=np.float64).reshape(s) for x, s in zip(noise or zeros, sizes)]
        self.bias = [np.asarray(x, dtype=np.float64).reshape(s) for x, s in zip(bias or zeros, sizes)]

        # v(z): probability a rollout from z ends at a correct terminal
        value: List[np.ndarray] = [np.zeros(s) for s in sizes]
        value[depth] = (self.answers[depth] == CORRECT).astype(np.float64)
        for d in range(depth - 1, -1, -1):
            through = (self.probs[d] * value[d + 1].reshape(sizes[d], branching)).sum(axis=1)
            value[d] = np.where(self.terminal[d], (self.answers[d] == CORRECT).astype(np.float64), through)
        self.value = value

        w = self.noise_weight
        self.prm = [np.ones(1)] + [
            clamp_scores(w * value[d] + (1.0 - w) * self.noise[d] + self.bias[d])
            for d in range(1, depth + 1)
        ]

    @classmethod
    def from_labels(
        cls,
        branching: int,
        depth: int,
        leaf_answers: Sequence[int],
        probs: Optional[Sequence[np.ndarray]] = None,
        **kw: Any,
    ) -> "SyntheticTreeEnv":
        """Env whose only terminals are the leaves, labelled by answer code."""
        sizes = level_sizes(branching, depth)
        if probs is None:
            probs = [np.full((sizes[d], branching), 1.0 / branching) for d in range(depth)]
        answers = [np.full(s, NOT_TERMINAL) for s in sizes]
        answers[depth] = np.asarray(leaf_answers, dtype=np.int64)
        return cls(branching, depth, probs, answers, **kw)

    @property
    def correct_label(self) -> str:
        return answer_label(CORRECT)

    @property
    def node_count(self) -> int:
        return sum(level_sizes(self.branching, self.depth))

    def is_correct(self, answer: Optional[str]) -> bool:
        return answer == self.correct_label

    def answer_at(self, depth: int, node: int) -> Optional[str]:
        code = int(self.answers[depth][node])
        return None if code == NOT_TERMINAL else answer_label(code)


def env_expand(env: SyntheticTreeEnv, prefix: Optional[Prefix], count: int,
               rng: np.random.Generator) -> List[Child]:
    """Draw `count` i.i.d. children of `prefix` (None = root) from the exact kernel."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if prefix is not None and prefix.terminal:
        frozen = Child(step=prefix.step, depth=prefix.depth, step_logprob=prefix.step_logprob,
                       terminal=True, answer=prefix.answer, handle=prefix.handle)
        return [frozen] * count

    d = 0 if prefix is None else prefix.depth
    node = 0 if prefix is None else int(prefix.handle)
    p = env.probs[d][node]
    cdf = np.cumsum(p)
    last = int(np.flatnonzero(p > 0)[-1])
    ks = np.minimum(np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right"), last)

    b = env.branching
    out: List[Child] = []
    for k in ks.tolist():
        c = node * b + k
        terminal = bool(env.terminal[d + 1][c])
        out.append(Child(
            step=k,
            depth=d + 1,
            step_logprob=float(env.log_probs[d][node, k]),
            terminal=terminal,
            answer=env.answer_at(d + 1, c) if terminal else None,
            handle=c,
        ))
    return out


def env_score(env: SyntheticTreeEnv, prefix: Any) -> float:
    """Deterministic PRM score of a prefix (or a not-yet-committed Child)."""
    return float(env.prm[prefix.depth][int(prefix.handle)])


class SyntheticBackend(Backend):
    """Backend over a SyntheticTreeEnv; temperature is ignored (the kernel is exact)."""

    def __init__(self, env: SyntheticTreeEnv) -> None:
        self.env = env

    def expand(self, parent, path, count, temperature, rng):
        return env_expand(self.env, parent, count, rng)

    def score(self, child, path):
        return env_score(self.env, child)

    def check_answer(self, answer):
        return self.env.is_correct(answer)


# ------------------------------- Env builders --------------------------------
def _kernel(rng: np.random.Generator, branching: int, depth: int,
            dirichlet_alpha: Optional[float]) -> List[np.ndarray]:
    sizes = level_sizes(branching, depth)
    if dirichlet_alpha is None:
        return [np.full((sizes[d], branching), 1.0 / branching) for d in range(depth)]
    return [rng.dirichlet(np.full(branching, dirichlet_alpha), size=sizes[d]) for d in range(depth)]


def _wrong_codes(rng: np.random.Generator, size: int, n_wrong: int) -> np.ndarray:
    return rng.integers(1, n_wrong + 1, size=size)


def make_random_env(
    branching: int,
    depth: int,
    env_seed: int = 0,
    *,
    correct_leaf_rate: float = 0.3,
    dirichlet_alpha: Optional[float] = 1.0,
    noise_weight: float = 1.0,
    n_wrong_answers: int = 3,
) -> SyntheticTreeEnv:
    """Random kernel, random leaf labels (at least one correct leaf)."""
    rng = np.random.default_rng(env_seed)
    probs = _kernel(rng, branching, depth, dirichlet_alpha)
    n_leaves = branching ** depth
    correct = rng.random(n_leaves) < correct_leaf_rate
    if not correct.any():
        correct[rng.integers(n_leaves)] = True
    leaves = np.where(correct, CORRECT, _wrong_codes(rng, n_leaves, n_wrong_answers))
    noise = [rng.random(s) for s in level_sizes(branching, depth)]
    return SyntheticTreeEnv.from_labels(branching, depth, leaves, probs,
                                        noise_weight=noise_weight, noise=noise, env_seed=env_seed)


class BlockerParams(BaseModel):
    branching: int = Field(3, ge=2)
    depth: int = Field(4, ge=2)
    env_seed: int = Field(0, ge=0)
    blocker_depth: int = Field(1, ge=1)
    over_fraction: float = Field(1.0, ge=0, le=1)   # share of the flagged node's wrong siblings that are over-scored
    over_score: float = 0.5
    under_score: float = -0.6
    bias_subtree: bool = False                      # carry the over-score down the blockers' subtrees
    noise_weight: float = Field(1.0, ge=0, le=1)
    correct_leaf_rate: float = Field(0.5, gt=0, le=1)
    dirichlet_alpha: Optional[float] = Field(None, gt=0)
    n_wrong_answers: int = Field(3, ge=1)
    verify_M: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _depths(self) -> "BlockerParams":
        if self.blocker_depth >= self.depth:
            raise ValueError("blocker_depth must be below the tree depth")
        return self


def _descendant_range(node: int, from_depth: int, to_depth: int, b: int) -> slice:
    span = b ** (to_depth - from_depth)
    return slice(node * span, (node + 1) * span)


def make_blocker_env(params: BlockerParams) -> SyntheticTreeEnv:
    """Env where an under-scored correct prefix hides behind over-scored wrong siblings.

    Only leaves under the flagged node can be correct. The construction is
    checked against exhaustive enumeration: the blocker predicate must hold at
    round `blocker_depth` exactly when at least one sibling is over-scored.
    """
    from ..oracle.table import blocker_predicate, enumerate_env

    b, D, bd = params.branching, params.depth, params.blocker_depth
    rng = np.random.default_rng(params.env_seed)
    sizes = level_sizes(b, D)
    probs = _kernel(rng, b, D, params.dirichlet_alpha)

    flagged = 0
    for _ in range(bd):
        flagged = flagged * b + int(rng.integers(b))

    leaves = _wrong_codes(rng, sizes[D], params.n_wrong_answers)
    under = _descendant_range(flagged, bd, D, b)
    correct = rng.random(under.stop - under.start) < params.correct_leaf_rate
    if not correct.any():
        correct[rng.integers(correct.size)] = True
    leaves[under] = np.where(correct, CORRECT, leaves[under])

    bias = [np.zeros(s) for s in sizes]
    parent = flagged // b
    siblings = [parent * b + k for k in range(b) if parent * b + k != flagged]
    n_over = math.ceil(params.over_fraction * len(siblings)) if params.over_fraction > 0 else 0
    blockers = sorted(int(s) for s in rng.permutation(siblings)[:n_over])
    for s in blockers:
        bias[bd][s] += params.over_score
        if params.bias_subtree:
            for d in range(bd + 1, D + 1):
                bias[d][_descendant_range(s, bd, d, b)] += params.over_score
    bias[bd][flagged] += params.under_score

    noise = [rng.random(s) for s in sizes]
    env = SyntheticTreeEnv.from_labels(b, D, leaves, probs, noise_weight=params.noise_weight,
                                       noise=noise, bias=bias, env_seed=params.env_seed,
                                       flagged=(bd, flagged))
    env.blockers = [(bd, s) for s in blockers]

    holds = blocker_predicate(enumerate_env(env), bd, params.verify_M)
    if holds != bool(blockers):
        raise ConstructionFailed(
            f"env_seed={params.env_seed}: blocker predicate is {holds} with {len(blockers)} blockers"
        )
    return env


class TrapParams(BaseModel):
    branching: int = Field(2, ge=2)
    depth: int = Field(11, ge=3)
    env_seed: int = Field(0, ge=0)
    rare_prob: float = Field(0.1, gt=0, lt=1)   # chance that a first step is followed by the correct one
    noise_weight: float = Field(0.9, ge=0, le=1)
    lure_bias: float = 0.7                      # offset on every first step
    wrong_bias: float = 0.45                    # offset on every node of a wrong continuation
    n_wrong_answers: int = Field(3, ge=1)


def make_trap_env(params: TrapParams) -> SyntheticTreeEnv:
    """Every first step has one rare child that answers correctly on the spot
    and common wrong children that lead to long, moderately scored dead ends.

    Frontier-only search commits to the first generation of children; a
    persistent pool can return to the first steps and redraw.
    """
    b, D = params.branching, params.depth
    rng = np.random.default_rng(params.env_seed)
    sizes = level_sizes(b, D)

    probs = [np.full((s, b), 1.0 / b) for s in sizes[:D]]
    answers = [np.full(s, NOT_TERMINAL, dtype=np.int64) for s in sizes]
    bias = [np.zeros(s) for s in sizes]
    bias[1][:] = params.lure_bias
    wrong_share = (1.0 - params.rare_prob) / (b - 1)
    for i in range(sizes[1]):
        k = int(rng.integers(b))
        probs[1][i, :] = wrong_share
        probs[1][i, k] = params.rare_prob
        answers[2][i * b + k] = CORRECT
        for j in range(b):
            if j == k:
                continue
            w = i * b + j
            for d in range(2, D + 1):
                bias[d][_descendant_range(w, 2, d, b)] += params.wrong_bias
    answers[D] = np.where(answers[D] == NOT_TERMINAL, _wrong_codes(rng, sizes[D], params.n_wrong_answers), answers[D])
    noise = [rng.random(s) for s in sizes]
    return SyntheticTreeEnv(b, D, probs, answers, noise_weight=params.noise_weight,
                            noise=noise, bias=bias, env_seed=params.env_seed)
