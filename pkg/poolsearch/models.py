from __future__ import annotations
import os
import re
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import (
    ANSWER_PATTERN, DEFAULT_HORIZON, DEFAULT_TEMPERATURE, HTTP_BACKOFF_S,
    HTTP_MAX_CONCURRENCY, HTTP_MAX_RETRIES, HTTP_TIMEOUT_S, MAX_STEP_TOKENS,
    OUTPUT_DIR, PBSMC_BETA0, PBSMC_G_MIN, PBSMC_GAMMA, R_MIN, STEP_DELIMITER,
)

ROOT = -1


class Method(str, Enum):
    BEAM = "Beam"
    STANDARD_SMC = "StandardSMC"
    GREEDY = "GreedySelection"
    SPS = "SPS"
    POWER_SMC = "PowerSMC"
    BACKTRACK_SMC = "BacktrackSMC"
    PB_SMC = "PowerBacktrackSMC"
    BEST_OF_N = "BestOfN"
    SELF_CONSISTENCY = "SelfConsistency"


FRONTIER_ONLY = frozenset({
    Method.BEAM, Method.STANDARD_SMC, Method.POWER_SMC, Method.BEST_OF_N, Method.SELF_CONSISTENCY,
})
# every selected particle is expanded once: M = N, B = 1
PARTICLE_METHODS = frozenset({
    Method.STANDARD_SMC, Method.POWER_SMC, Method.BACKTRACK_SMC, Method.PB_SMC,
    Method.BEST_OF_N, Method.SELF_CONSISTENCY,
})
POWERED_METHODS = frozenset({Method.POWER_SMC, Method.BACKTRACK_SMC, Method.PB_SMC})


# ------------------------------- Tree records --------------------------------
class Prefix(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=0)
    parent: int = Field(ge=ROOT)
    step: Any = None
    depth: int = Field(ge=1)
    step_logprob: Optional[float] = None   # None when the generator does not report it
    prm_score: float
    terminal: bool = False
    answer: Optional[str] = None
    handle: Any = None                     # backend-private state (synthetic node index)

    @model_validator(mode="after")
    def _check(self) -> "Prefix":
        if not (R_MIN <= self.prm_score <= 1.0):
            raise ValueError(f"prm_score {self.prm_score} outside [{R_MIN}, 1]")
        if (self.parent == ROOT) != (self.depth == 1):
            raise ValueError("depth == 1 iff the parent is the root prompt")
        if self.terminal != (self.answer is not None):
            raise ValueError("terminal prefixes carry an answer, non-terminal ones do not")
        return self


class Child(BaseModel):
    """One generated continuation, before it is scored and added to the arena."""
    step: Any
    depth: int = Field(ge=1)
    step_logprob: Optional[float] = None
    terminal: bool = False
    answer: Optional[str] = None
    handle: Any = None
    tokens: Optional[int] = None


# ------------------------------- Method specs --------------------------------
class ScheduleParams(BaseModel):
    gamma: float = Field(PBSMC_GAMMA, gt=0)
    g_min: float = Field(PBSMC_G_MIN, gt=0, le=1)
    g_max: float = Field(1.0, gt=0)
    beta0: float = Field(PBSMC_BETA0, ge=0)
    adaptive_beta: bool = True
    alpha: Optional[float] = Field(None, gt=0, le=1)   # fixed mixture probability, overrides the schedule
    retain_history: bool = True

    @model_validator(mode="after")
    def _order(self) -> "ScheduleParams":
        if self.g_max < self.g_min:
            raise ValueError("g_max must be >= g_min")
        return self


class MethodSpec(BaseModel):
    method: Method
    rho_mode: Literal["adaptive", "fixed"] = "adaptive"
    rho: float = Field(1.0, gt=0, le=1)
    persistent: bool = True
    cumulative_mean: bool = False
    final_from_pool_sample: bool = False
    schedule: ScheduleParams = Field(default_factory=ScheduleParams)

    @model_validator(mode="after")
    def _apply_variant(self) -> "MethodSpec":
        if self.method == Method.POWER_SMC:
            self.schedule = self.schedule.model_copy(update={"alpha": 1.0, "retain_history": False})
        elif self.method == Method.BACKTRACK_SMC:
            self.schedule = self.schedule.model_copy(update={"adaptive_beta": False})
        return self

    @property
    def particle(self) -> bool:
        return self.method in PARTICLE_METHODS

    @property
    def powered(self) -> bool:
        return self.method in POWERED_METHODS

    @property
    def persistent_union(self) -> bool:
        return self.method in (Method.GREEDY, Method.SPS) and self.persistent

    @property
    def retains_history(self) -> bool:
        return self.method in (Method.BACKTRACK_SMC, Method.PB_SMC) and self.schedule.retain_history


class SearchConfig(BaseModel):
    child_budget: int = Field(gt=0)
    parent_budget: Optional[int] = Field(None, gt=0)
    horizon: int = Field(DEFAULT_HORIZON, gt=0)
    rng_seed: int = Field(0, ge=0)
    spec: MethodSpec
    temperature: float = Field(DEFAULT_TEMPERATURE, ge=0)
    early_stop: bool = True

    @model_validator(mode="after")
    def _budgets(self) -> "SearchConfig":
        n = self.child_budget
        if self.spec.particle:
            if self.parent_budget not in (None, n):
                raise ValueError(f"{self.spec.method.value} expands every particle once; parent_budget must equal child_budget")
            self.parent_budget = n
        else:
            if self.parent_budget is None:
                self.parent_budget = n // 4 if n % 4 == 0 else n
            if n % self.parent_budget:
                raise ValueError(f"parent_budget {self.parent_budget} must divide child_budget {n}")
        return self

    @property
    def method(self) -> Method:
        return self.spec.method

    @property
    def children_per_parent(self) -> int:
        return self.child_budget // self.parent_budget


# ------------------------------- Run records ---------------------------------
class ComputeLedger(BaseModel):
    new_generation_units: int = 0
    generated_tokens: Optional[int] = None   # only when the generator reports usage
    backtrack_recompute_units: int = 0
    scorer_calls: int = 0


class RoundTrace(BaseModel):
    round: int
    parents: List[int]
    children: List[int]
    frozen: int = 0
    pool_size: int
    new_units: int = 0
    backtrack_units: int = 0
    rho: Optional[float] = None
    alpha: Optional[float] = None
    beta_prev: Optional[float] = None
    beta: Optional[float] = None
    log_space: bool = False


class FinalAnswer(BaseModel):
    answer: Optional[str] = None
    prefix_id: Optional[int] = None
    score: Optional[float] = None
    valid: bool = True
    votes: Optional[int] = None


class SearchResult(BaseModel):
    problem_id: str
    method: Method
    child_budget: int
    seed: int
    final: Optional[FinalAnswer] = None
    correct: Optional[bool] = None
    ledger: ComputeLedger = Field(default_factory=ComputeLedger)
    rounds_run: int = 0
    pool_sizes: List[int] = Field(default_factory=list)
    trace: List[RoundTrace] = Field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None
    wall_time_s: float = 0.0


# ------------------------------- HTTP backend --------------------------------
class HttpBackendConfig(BaseModel):
    generator_url: str
    generator_model: str
    scorer_url: str
    scorer_model: str
    auth_token_env: Optional[str] = None
    auth_token: Optional[str] = Field(None, exclude=True, repr=False)
    step_delimiter: str = STEP_DELIMITER
    answer_pattern: str = ANSWER_PATTERN
    timeout_s: float = Field(HTTP_TIMEOUT_S, gt=0)
    max_retries: int = Field(HTTP_MAX_RETRIES, gt=0)
    max_concurrent: int = Field(HTTP_MAX_CONCURRENCY, gt=0)
    backoff_s: float = Field(HTTP_BACKOFF_S, ge=0)
    max_tokens: int = Field(MAX_STEP_TOKENS, gt=0)

    @field_validator("answer_pattern")
    @classmethod
    def _compiles(cls, v: str) -> str:
        re.compile(v)
        return v

    @field_validator("step_delimiter")
    @classmethod
    def _nonempty(cls, v: str) -> str:
        if not v:
            raise ValueError("step_delimiter must be non-empty")
        return v

    def bearer_token(self) -> Optional[str]:
        if self.auth_token:
            return self.auth_token
        if self.auth_token_env:
            return os.getenv(self.auth_token_env) or None
        return None


# ------------------------------- Experiments ---------------------------------
class SyntheticProblems(BaseModel):
    family: Literal["random", "blocker", "trap"] = "random"
    count: int = Field(1, gt=0)
    base_seed: int = Field(0, ge=0)
    params: Dict[str, Any] = Field(default_factory=dict)


class HttpProblems(BaseModel):
    problems_file: str
    backend: HttpBackendConfig


class ProblemSource(BaseModel):
    synthetic: Optional[SyntheticProblems] = None
    http: Optional[HttpProblems] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "ProblemSource":
        if (self.synthetic is None) == (self.http is None):
            raise ValueError("problems must name exactly one of 'synthetic' or 'http'")
        return self


class MethodEntry(BaseModel):
    method: Method
    label: Optional[str] = None
    children_per_parent: int = Field(4, gt=0)   # B for top-M methods; particle methods use 1
    horizon: Optional[int] = Field(None, gt=0)
    temperature: Optional[float] = Field(None, ge=0)
    early_stop: bool = True
    rho_mode: Literal["adaptive", "fixed"] = "adaptive"
    rho: float = Field(1.0, gt=0, le=1)
    rhos: List[float] = Field(default_factory=list)
    persistent: bool = True
    cumulative_mean: bool = False
    final_from_pool_sample: bool = False
    schedule: Dict[str, Any] = Field(default_factory=dict)
    gammas: List[float] = Field(default_factory=list)
    g_mins: List[float] = Field(default_factory=list)

    def expand(self) -> List[Tuple[str, MethodSpec]]:
        """Resolve sweep lists into (label, MethodSpec) pairs."""
        base = self.label or self.method.value
        sched_grid: List[Dict[str, Any]] = [{}]
        if self.gammas:
            sched_grid = [dict(s, gamma=g) for s in sched_grid for g in self.gammas]
        if self.g_mins:
            sched_grid = [dict(s, g_min=g) for s in sched_grid for g in self.g_mins]
        rho_grid: List[Dict[str, Any]] = [{"rho_mode": self.rho_mode, "rho": self.rho}]
        if self.rhos:
            rho_grid = [{"rho_mode": "fixed", "rho": r} for r in self.rhos]

        out: List[Tuple[str, MethodSpec]] = []
        for sched in sched_grid:
            for rho in rho_grid:
                tags = [f"{k}={v:g}" for k, v in sched.items()]
                if self.rhos:
                    tags.append(f"rho={rho['rho']:g}")
                label = f"{base}[{','.join(tags)}]" if tags else base
                spec = MethodSpec(
                    method=self.method,
                    persistent=self.persistent,
                    cumulative_mean=self.cumulative_mean,
                    final_from_pool_sample=self.final_from_pool_sample,
                    schedule=ScheduleParams(**{**self.schedule, **sched}),
                    **rho,
                )
                out.append((label, spec))
        return out

    def search_config(self, spec: MethodSpec, n: int, horizon: int, seed: int) -> SearchConfig:
        if spec.particle:
            m = None
        else:
            if n % self.children_per_parent:
                raise ValueError(f"children_per_parent {self.children_per_parent} must divide N={n}")
            m = n // self.children_per_parent
        return SearchConfig(
            child_budget=n,
            parent_budget=m,
            horizon=self.horizon or horizon,
            rng_seed=seed,
            spec=spec,
            temperature=DEFAULT_TEMPERATURE if self.temperature is None else self.temperature,
            early_stop=self.early_stop,
        )


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    problems: ProblemSource
    methods: List[MethodEntry] = Field(min_length=1)
    seeds: List[int] = Field(min_length=1)
    master_seed: int = 0
    n_values: List[int] = Field(min_length=1)
    horizon: int = Field(DEFAULT_HORIZON, gt=0)
    output_dir: str = OUTPUT_DIR
    workers: int = Field(1, gt=0)

    @field_validator("n_values")
    @classmethod
    def _positive(cls, v: List[int]) -> List[int]:
        if any(n <= 0 for n in v):
            raise ValueError("every N must be positive")
        return v

    @model_validator(mode="after")
    def _cells_resolve(self) -> "ExperimentConfig":
        labels: List[str] = []
        for entry in self.methods:
            for label, spec in entry.expand():
                labels.append(label)
                for n in self.n_values:
                    entry.search_config(spec, n, self.horizon, 0)
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        if dupes:
            raise ValueError(f"duplicate method labels: {dupes}")
        return self


class MetricsRecord(BaseModel):
    method: str
    N: int
    seed: int
    problem_id: str
    correct: bool = False
    answer: Optional[str] = None
    valid: bool = False
    new_generation_units: int = 0
    generated_tokens: Optional[int] = None
    backtrack_recompute_units: int = 0
    scorer_calls: int = 0
    wall_time_s: float = 0.0
    rounds_run: int = 0
    pool_sizes: List[int] = Field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None
