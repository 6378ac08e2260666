"""Exhaustive enumeration of a synthetic environment.

Rows are the reachable prefixes (no terminal ancestor), ordered by depth then
node index. Densities are kept as logs; sums go through `log_total`, which
shifts by the max and adds with math.fsum over magnitudes sorted descending.
"""
from __future__ import annotations
import json
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..config import ENUM_CAP
from ..errors import EnvTooLarge
from ..backends.synthetic import CORRECT, SyntheticTreeEnv


def log_total(log_values: np.ndarray) -> float:
    """log of sum(exp(log_values)), -inf for an empty or all-zero input."""
    v = np.asarray(log_values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return -math.inf
    top = float(v.max())
    terms = np.sort(np.exp(v - top))[::-1]
    return top + math.log(math.fsum(terms.tolist()))


def _mask_log(values: np.ndarray, keep: np.ndarray) -> np.ndarray:
    return np.where(keep, values, -np.inf)


class OracleTable(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    branching: int
    max_depth: int
    env_seed: int = 0
    lengths: np.ndarray      # len(z)
    nodes: np.ndarray        # node index within its level
    log_p: np.ndarray        # log p_LLM(z)
    log_r: np.ndarray        # log r_PRM(z), clamped
    log_rpa: np.ndarray      # log r_PRM(pa(z)); 0 at depth 1
    sigma: np.ndarray        # p(z) * P(correct | z)
    terminal: np.ndarray
    correct: np.ndarray

    def __len__(self) -> int:
        return int(self.lengths.size)

    @property
    def prm(self) -> np.ndarray:
        return np.exp(self.log_r)

    @property
    def parent_prm(self) -> np.ndarray:
        return np.exp(self.log_rpa)

    @property
    def p(self) -> np.ndarray:
        return np.exp(self.log_p)

    def row(self, depth: int, node: int) -> int:
        hits = np.flatnonzero((self.lengths == depth) & (self.nodes == node))
        if hits.size == 0:
            raise KeyError(f"prefix ({depth}, {node}) is not reachable")
        return int(hits[0])

    def path(self, i: int) -> List[int]:
        """Step labels from the root down to row i."""
        node, steps = int(self.nodes[i]), []
        for _ in range(int(self.lengths[i])):
            node, k = divmod(node, self.branching)
            steps.append(k)
        return steps[::-1]

    # ------------------------------ densities --------------------------------
    def log_target(self, beta: float, t: int) -> np.ndarray:
        """log of p(z) r(z)^beta 1{len <= t+1}."""
        return _mask_log(self.log_p + beta * self.log_r, self.lengths <= t + 1)

    def log_q_new(self, beta_prev: float, t: int) -> np.ndarray:
        """log of p(z) r(pa(z))^beta_prev 1{2 <= len <= t+1}."""
        keep = (self.lengths >= 2) & (self.lengths <= t + 1)
        return _mask_log(self.log_p + beta_prev * self.log_rpa, keep)

    def log_q_hist(self, beta_prev: float, t: int) -> np.ndarray:
        """log of p(z) r(z)^beta_prev 1{len <= t}."""
        return _mask_log(self.log_p + beta_prev * self.log_r, self.lengths <= t)

    def log_q_branch(self, beta_prev: float, t: int) -> np.ndarray:
        """log density of one B_t entry: a fresh child, or a frozen copy of a terminal of len <= t."""
        frozen = _mask_log(self.log_p + beta_prev * self.log_r, self.terminal & (self.lengths <= t))
        return np.logaddexp(self.log_q_new(beta_prev, t), frozen)

    def log_q_mix(self, alpha: float, beta_prev: float, t: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.logaddexp(
                math.log(alpha) + self.log_q_branch(beta_prev, t),
                (math.log1p(-alpha) if alpha < 1 else -math.inf) + self.log_q_hist(beta_prev, t),
            )

    def log_normalizer(self, beta_prev: float, t: int) -> float:
        """log Z_{t-1}: total mass of the previous round's powered target."""
        return log_total(self.log_q_hist(beta_prev, t))

    def target_probabilities(self, beta: float, t: int) -> np.ndarray:
        lt = self.log_target(beta, t)
        return np.exp(lt - log_total(lt))

    def correction_ratio(self, alpha: float, beta_prev: float, beta: float, t: int) -> np.ndarray:
        """pi~_t / q~_mix per row; NaN outside the target's support."""
        with np.errstate(invalid="ignore"):
            ratio = np.exp(self.log_target(beta, t) - self.log_q_mix(alpha, beta_prev, t))
        return np.where(self.lengths <= t + 1, ratio, np.nan)

    def expectation(self, f_values: np.ndarray, beta: float, t: int) -> float:
        prob = self.target_probabilities(beta, t)
        return math.fsum((prob * np.asarray(f_values, dtype=np.float64)).tolist())

    def restricted_expectation(self, f_values: np.ndarray, beta: float, length: int) -> float:
        """E[f] under p r^beta restricted to prefixes of exactly `length` steps and
        terminals that stopped earlier."""
        keep = (self.lengths == length) | (self.terminal & (self.lengths < length))
        lt = _mask_log(self.log_p + beta * self.log_r, keep)
        prob = np.exp(lt - log_total(lt))
        return math.fsum((prob * np.asarray(f_values, dtype=np.float64)).tolist())

    # ------------------------------ export -----------------------------------
    def to_json(self) -> str:
        rows = [
            {
                "path": self.path(i),
                "depth": int(self.lengths[i]),
                "log_p": float(self.log_p[i]),
                "prm": float(math.exp(self.log_r[i])),
                "sigma": float(self.sigma[i]),
                "terminal": bool(self.terminal[i]),
                "correct": bool(self.correct[i]),
            }
            for i in range(len(self))
        ]
        env = {"branching": self.branching, "depth": self.max_depth, "env_seed": self.env_seed}
        return json.dumps({"env": env, "prefixes": rows})

    @classmethod
    def from_json(cls, text: str) -> "OracleTable":
        doc = json.loads(text)
        env, rows = doc["env"], doc["prefixes"]
        b = int(env["branching"])
        nodes, prm_by_key = [], {}
        for r in rows:
            node = 0
            for k in r["path"]:
                node = node * b + int(k)
            nodes.append(node)
            prm_by_key[(int(r["depth"]), node)] = float(r["prm"])
        lengths = np.array([r["depth"] for r in rows], dtype=np.int64)
        nodes_arr = np.array(nodes, dtype=np.int64)
        rpa = [1.0 if d == 1 else prm_by_key[(d - 1, n // b)] for d, n in zip(lengths.tolist(), nodes)]
        return cls(
            branching=b,
            max_depth=int(env["depth"]),
            env_seed=int(env.get("env_seed", 0)),
            lengths=lengths,
            nodes=nodes_arr,
            log_p=np.array([r["log_p"] for r in rows], dtype=np.float64),
            log_r=np.log(np.array([r["prm"] for r in rows], dtype=np.float64)),
            log_rpa=np.log(np.array(rpa, dtype=np.float64)),
            sigma=np.array([r["sigma"] for r in rows], dtype=np.float64),
            terminal=np.array([r["terminal"] for r in rows], dtype=bool),
            correct=np.array([r["correct"] for r in rows], dtype=bool),
        )


def enumerate_env(env: SyntheticTreeEnv, cap: int = ENUM_CAP) -> OracleTable:
    if env.node_count > cap:
        raise EnvTooLarge(f"{env.node_count} prefixes exceed the enumeration cap of {cap}")
    b = env.branching
    cols: Dict[str, List[np.ndarray]] = {k: [] for k in
                                         ("lengths", "nodes", "log_p", "log_r", "log_rpa", "sigma", "terminal", "correct")}

    open_prev = np.ones(1, dtype=bool)      # reachable and not terminal
    log_p_prev = np.zeros(1)
    for d in range(1, env.depth + 1):
        size = b ** d
        c = np.arange(size)
        parent = c // b
        reach = open_prev[parent]
        with np.errstate(invalid="ignore"):
            log_p = log_p_prev[parent] + env.log_probs[d - 1].reshape(-1)
        idx = np.flatnonzero(reach)
        cols["lengths"].append(np.full(idx.size, d, dtype=np.int64))
        cols["nodes"].append(idx)
        cols["log_p"].append(log_p[idx])
        cols["log_r"].append(np.log(env.prm[d][idx]))
        cols["log_rpa"].append(np.log(env.prm[d - 1][parent[idx]]))
        cols["sigma"].append(np.exp(log_p[idx]) * env.value[d][idx])
        cols["terminal"].append(env.terminal[d][idx])
        cols["correct"].append(env.terminal[d][idx] & (env.answers[d][idx] == CORRECT))
        log_p_prev = log_p
        open_prev = reach & ~env.terminal[d]

    return OracleTable(
        branching=b,
        max_depth=env.depth,
        env_seed=env.env_seed,
        **{k: np.concatenate(v) for k, v in cols.items()},
    )


def blocker_predicate(table: OracleTable, round: int, m: int) -> bool:
    """True iff the global top-m prefixes of length <= round all have sigma = 0
    while some other such prefix has sigma > 0.

    Ranking: PRM desc, then depth asc, then node asc; zero-probability prefixes
    are never candidates.
    """
    cand = np.flatnonzero((table.lengths <= round) & np.isfinite(table.log_p))
    if m >= cand.size:
        return False
    order = np.lexsort((table.nodes[cand], table.lengths[cand], -table.log_r[cand]))
    ranked = cand[order]
    top, rest = ranked[:m], ranked[m:]
    return bool((table.sigma[top] == 0).all() and (table.sigma[rest] > 0).any())


def highest_sigma_row(table: OracleTable, length: Optional[int] = None) -> Tuple[int, int]:
    """(depth, node) of the prefix with the largest sigma, optionally at one length."""
    keep = np.ones(len(table), dtype=bool) if length is None else table.lengths == length
    rows = np.flatnonzero(keep)
    i = int(rows[np.argmax(table.sigma[rows])])
    return int(table.lengths[i]), int(table.nodes[i])


def highest_target_row(table: OracleTable, beta: float, t: int) -> Tuple[int, int]:
    """(depth, node) of the prefix the round-t powered target favors most."""
    i = int(np.argmax(table.log_target(beta, t)))
    return int(table.lengths[i]), int(table.nodes[i])
