from .base import Backend, ExpansionRequest, ScoreRequest
from .http import HttpBackend
from .synthetic import (
    BlockerParams, SyntheticBackend, SyntheticTreeEnv, TrapParams, env_expand, env_score,
    make_blocker_env, make_random_env, make_trap_env,
)

__all__ = [
    "Backend", "ExpansionRequest", "ScoreRequest", "HttpBackend",
    "SyntheticTreeEnv", "SyntheticBackend", "env_expand", "env_score", "make_random_env",
    "BlockerParams", "make_blocker_env", "TrapParams", "make_trap_env",
]
