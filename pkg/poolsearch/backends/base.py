from __future__ import annotations
from typing import Any, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..models import Child, Prefix


class ExpansionRequest(BaseModel):
    """Expand `parent` (None = root prompt) into `count` children."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    parent: Optional[Prefix] = None
    path: List[Any] = []
    count: int


class ScoreRequest(BaseModel):
    """Score `child`; `path` already ends with the child's step."""
    child: Child
    path: List[Any]


class Backend:
    """Generator/scorer pair bound to one problem instance.

    Subclasses implement `expand` and `score`; the batch entry points used by the
    engine default to sequential loops and must return results in request order.
    """

    retries: int = 0

    def expand(self, parent: Optional[Prefix], path: Sequence[Any], count: int,
               temperature: float, rng: np.random.Generator) -> List[Child]:
        raise NotImplementedError

    def score(self, child: Child, path: Sequence[Any]) -> float:
        raise NotImplementedError

    def expand_batch(self, requests: Sequence[ExpansionRequest], temperature: float,
                     rng: np.random.Generator) -> List[List[Child]]:
        return [self.expand(r.parent, r.path, r.count, temperature, rng) for r in requests]

    def score_batch(self, requests: Sequence[ScoreRequest]) -> List[float]:
        return [self.score(r.child, r.path) for r in requests]

    def check_answer(self, answer: Optional[str]) -> Optional[bool]:
        """Ground-truth check; None when the backend has no reference answer."""
        return None
