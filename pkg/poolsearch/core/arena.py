from __future__ import annotations
from typing import Any, Iterable, List, Optional, Sequence

import numpy as np

from ..models import ROOT, Child, Prefix
from .scoring import clamp_score


class PrefixArena:
    """Append-only store of every prefix created during one search run.

    Columns are kept as parallel lists indexed by PrefixId; `get` materializes an
    immutable Prefix. Ids are dense, start at 0 and are never reused.
    """

    def __init__(self) -> None:
        self._parent: List[int] = []
        self._step: List[Any] = []
        self._depth: List[int] = []
        self._logprob: List[Optional[float]] = []
        self._prm: List[float] = []
        self._prm_sum: List[float] = []     # running sum of PRM scores along the path
        self._terminal: List[bool] = []
        self._answer: List[Optional[str]] = []
        self._handle: List[Any] = []

    def __len__(self) -> int:
        return len(self._parent)

    def __contains__(self, pid: int) -> bool:
        return 0 <= pid < len(self._parent)

    def add(self, parent: int, child: Child, prm_score: float) -> int:
        parent_depth = 0 if parent == ROOT else self._depth[parent]
        if child.depth != parent_depth + 1:
            raise ValueError(f"child depth {child.depth} does not extend parent depth {parent_depth}")
        if child.terminal != (child.answer is not None):
            raise ValueError("terminal children carry an answer, non-terminal ones do not")
        r = clamp_score(prm_score)
        pid = len(self._parent)
        self._parent.append(parent)
        self._step.append(child.step)
        self._depth.append(child.depth)
        self._logprob.append(child.step_logprob)
        self._prm.append(r)
        self._prm_sum.append(r + (0.0 if parent == ROOT else self._prm_sum[parent]))
        self._terminal.append(bool(child.terminal))
        self._answer.append(child.answer)
        self._handle.append(child.handle)
        return pid

    def get(self, pid: int) -> Prefix:
        return Prefix(
            id=pid,
            parent=self._parent[pid],
            step=self._step[pid],
            depth=self._depth[pid],
            step_logprob=self._logprob[pid],
            prm_score=self._prm[pid],
            terminal=self._terminal[pid],
            answer=self._answer[pid],
            handle=self._handle[pid],
        )

    # ---- scalar views ----
    def parent(self, pid: int) -> int:
        return self._parent[pid]

    def depth(self, pid: int) -> int:
        return self._depth[pid]

    def prm(self, pid: int) -> float:
        return self._prm[pid]

    def parent_prm(self, pid: int) -> float:
        pa = self._parent[pid]
        return 1.0 if pa == ROOT else self._prm[pa]

    def is_terminal(self, pid: int) -> bool:
        return self._terminal[pid]

    def answer(self, pid: int) -> Optional[str]:
        return self._answer[pid]

    def handle(self, pid: int) -> Any:
        return self._handle[pid]

    def path(self, pid: int) -> List[Any]:
        """Step payloads from the root prompt down to `pid`."""
        steps: List[Any] = []
        while pid != ROOT:
            steps.append(self._step[pid])
            pid = self._parent[pid]
        steps.reverse()
        return steps

    def terminal_ids(self) -> List[int]:
        return [i for i, term in enumerate(self._terminal) if term]

    # ---- vector views over a pool's ids ----
    @staticmethod
    def _as_list(ids: Iterable[int]) -> List[int]:
        return ids.tolist() if isinstance(ids, np.ndarray) else list(ids)

    def prm_array(self, ids: Sequence[int]) -> np.ndarray:
        prm = self._prm
        return np.array([prm[i] for i in self._as_list(ids)], dtype=np.float64)

    def parent_prm_array(self, ids: Sequence[int]) -> np.ndarray:
        prm, par = self._prm, self._parent
        return np.array(
            [1.0 if par[i] == ROOT else prm[par[i]] for i in self._as_list(ids)], dtype=np.float64
        )

    def depth_array(self, ids: Sequence[int]) -> np.ndarray:
        depth = self._depth
        return np.array([depth[i] for i in self._as_list(ids)], dtype=np.int64)

    def terminal_array(self, ids: Sequence[int]) -> np.ndarray:
        term = self._terminal
        return np.array([term[i] for i in self._as_list(ids)], dtype=bool)

    def cumulative_mean_array(self, ids: Sequence[int]) -> np.ndarray:
        s, d = self._prm_sum, self._depth
        return np.array([s[i] / d[i] for i in self._as_list(ids)], dtype=np.float64)
