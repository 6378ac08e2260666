from __future__ import annotations
import logging
from pathlib import Path
from typing import Callable, List

from ..audit import write_event
from ..backends.base import Backend
from ..backends.http import HttpBackend
from ..backends.synthetic import (
    BlockerParams, SyntheticBackend, SyntheticTreeEnv, TrapParams, make_blocker_env, make_random_env, make_trap_env,
)
from ..errors import ConfigError, ConstructionFailed
from ..models import HttpProblems, ProblemSource, SyntheticProblems
from ..store import read_jsonl

log = logging.getLogger(__name__)


class Problem:
    """One problem instance; `make_backend` returns a fresh backend per cell."""

    def __init__(self, problem_id: str, make_backend: Callable[[], Backend]) -> None:
        self.id = problem_id
        self.make_backend = make_backend

    def __repr__(self) -> str:
        return f"Problem({self.id!r})"


def build_env(family: str, env_seed: int, params: dict) -> SyntheticTreeEnv:
    if family == "random":
        kw = dict(params)
        b, d = int(kw.pop("branching", 3)), int(kw.pop("depth", 4))
        return make_random_env(b, d, env_seed=env_seed, **kw)
    if family == "blocker":
        return make_blocker_env(BlockerParams(**{**params, "env_seed": env_seed}))
    if family == "trap":
        return make_trap_env(TrapParams(**{**params, "env_seed": env_seed}))
    raise ConfigError(f"unknown synthetic family {family!r}")


def synthetic_problems(src: SyntheticProblems) -> List[Problem]:
    out: List[Problem] = []
    for i in range(src.count):
        env_seed = src.base_seed + i
        pid = f"{src.family}-{env_seed}"
        try:
            env = build_env(src.family, env_seed, src.params)
        except ConstructionFailed as e:
            log.warning("skipping %s: %s", pid, e)
            write_event("problem_skipped", {"problem_id": pid, "error": str(e)})
            continue
        out.append(Problem(pid, lambda env=env: SyntheticBackend(env)))
    return out


def http_problems(src: HttpProblems) -> List[Problem]:
    path = Path(src.problems_file)
    if not path.exists():
        raise ConfigError(f"problems file not found: {path}")
    out: List[Problem] = []
    for row in read_jsonl(path):
        if "id" not in row or "problem" not in row:
            raise ConfigError(f"{path}: every line needs 'id' and 'problem'")
        out.append(Problem(
            str(row["id"]),
            lambda row=row: HttpBackend(src.backend, row["problem"], reference_answer=row.get("answer")),
        ))
    return out


def load_problems(source: ProblemSource) -> List[Problem]:
    if source.synthetic is not None:
        return synthetic_problems(source.synthetic)
    return http_problems(source.http)
