from __future__ import annotations
import logging
import math
import time
from collections import Counter
from typing import Callable, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..audit import write_event
from ..backends.base import Backend, ExpansionRequest, ScoreRequest
from ..core.arena import PrefixArena
from ..core.pool import Pool, multinomial_sample, top_m_select
from ..errors import AllWeightsZero, BackendError, MalformedResponse, NoTerminalTrace
from ..metrics import BACKTRACK_UNITS_TOTAL, CHILDREN_TOTAL, ROUNDS_TOTAL, SCORER_CALLS_TOTAL, SEARCH_FAILURES_TOTAL
from ..models import (
    ROOT, ComputeLedger, FinalAnswer, Method, MethodSpec, RoundTrace, SearchConfig, SearchResult,
)
from ..pbsmc import ScheduleState, advance, alpha_at, assign_pbsmc_weights, initial_state, sample_retained
from ..selectors import (
    adaptive_rho, memory_update, select_beam, select_smc_parents, select_sps, smc_incremental_weights,
)

log = logging.getLogger(__name__)


class SearchRun:
    """Mutable state of one search over one problem instance.

    Single owner: every pool and arena mutation happens through the functions in
    this module, and all randomness comes from `rng`.
    """

    def __init__(self, config: SearchConfig, backend: Backend, problem_id: str = "problem") -> None:
        self.config = config
        self.backend = backend
        self.problem_id = problem_id
        self.rng = np.random.default_rng(config.rng_seed)
        self.arena = PrefixArena()
        self.pool = Pool.empty()
        self.ledger = ComputeLedger()
        self.trace: List[RoundTrace] = []
        self.pool_sizes: List[int] = []
        self.schedule: Optional[ScheduleState] = None
        self.previous_children: Set[int] = set()
        self.rounds_run = 0
        self.done = False

    @property
    def spec(self) -> MethodSpec:
        return self.config.spec

    @property
    def method(self) -> Method:
        return self.config.spec.method


# --------------------------------- helpers ------------------------------------
def expansion_counts(n_parents: int, n: int, m: int) -> List[int]:
    """Children per parent: B = N/M, or ceil(N/|parents|) when fewer than M
    parents exist, truncated so the round still totals N."""
    if n_parents <= 0:
        return []
    b = n // m if n_parents >= m else math.ceil(n / n_parents)
    counts, remaining = [], n
    for _ in range(n_parents):
        c = min(b, remaining)
        counts.append(c)
        remaining -= c
    return counts


def _expand(run: SearchRun, plan: Sequence[Tuple[int, int]]) -> Tuple[List[int], int]:
    """Expand (parent, count) pairs, score every new child and commit in parent
    order. Terminal parents pass through `count` times. Returns (B_t ids, frozen)."""
    arena, cfg = run.arena, run.config
    live = [(pid, c) for pid, c in plan if pid == ROOT or not arena.is_terminal(pid)]
    requests = [
        ExpansionRequest(
            parent=None if pid == ROOT else arena.get(pid),
            path=[] if pid == ROOT else arena.path(pid),
            count=c,
        )
        for pid, c in live
    ]
    batches = run.backend.expand_batch(requests, cfg.temperature, run.rng) if requests else []
    if len(batches) != len(requests):
        raise MalformedResponse(f"{len(batches)} expansion results for {len(requests)} requests")

    score_requests: List[ScoreRequest] = []
    for req, batch in zip(requests, batches):
        if len(batch) != req.count:
            raise MalformedResponse(f"expected {req.count} children, got {len(batch)}")
        score_requests.extend(ScoreRequest(child=ch, path=[*req.path, ch.step]) for ch in batch)
    scores = run.backend.score_batch(score_requests) if score_requests else []
    if len(scores) != len(score_requests):
        raise MalformedResponse(f"{len(scores)} scores for {len(score_requests)} children")
    run.ledger.scorer_calls += len(scores)
    SCORER_CALLS_TOTAL.inc(len(scores))

    tokens = [sr.child.tokens for sr in score_requests if sr.child.tokens is not None]
    if tokens:
        run.ledger.generated_tokens = (run.ledger.generated_tokens or 0) + int(sum(tokens))

    kids: List[int] = []
    frozen = 0
    it = iter(zip(score_requests, scores))
    for pid, c in plan:
        if pid != ROOT and arena.is_terminal(pid):
            kids.extend([pid] * c)
            frozen += c
            continue
        for _ in range(c):
            sr, s = next(it)
            kids.append(arena.add(pid, sr.child, s))
    return kids, frozen


def _prm_pool(arena: PrefixArena, ids: Sequence[int], t: int, cumulative: bool = False) -> Pool:
    w = arena.cumulative_mean_array(ids) if cumulative else arena.prm_array(ids)
    return Pool(ids=ids, weights=w, round=t)


def _select_parents(run: SearchRun) -> Tuple[List[int], Optional[float]]:
    spec, cfg, pool = run.spec, run.config, run.pool
    m = cfg.parent_budget
    if spec.method in (Method.BEAM, Method.GREEDY):
        return select_beam(pool, m), None
    if spec.method == Method.SPS:
        rho = adaptive_rho(pool, run.arena) if spec.rho_mode == "adaptive" else spec.rho
        return select_sps(pool, m, rho, run.rng), rho
    if spec.method in (Method.BEST_OF_N, Method.SELF_CONSISTENCY):
        return pool.ids.tolist(), None
    return select_smc_parents(pool, cfg.child_budget, run.rng), None


def _weights_fn(run: SearchRun, t: int) -> Tuple[Callable[..., Pool], dict]:
    """W_t for the round's children (and retained draws for backtracking SMC)."""
    spec, arena, n = run.spec, run.arena, run.config.child_budget
    method = spec.method

    if method == Method.BEAM:
        return (lambda kids: _prm_pool(arena, kids, t, spec.cumulative_mean)), {}
    if method in (Method.GREEDY, Method.SPS, Method.BEST_OF_N, Method.SELF_CONSISTENCY):
        return (lambda kids: _prm_pool(arena, kids, t)), {}
    if method == Method.STANDARD_SMC:
        return (lambda kids: Pool(ids=kids, weights=smc_incremental_weights(arena, kids, t), round=t)), {}

    state = run.schedule
    alpha = alpha_at(state, t)
    info = {"alpha": alpha, "beta_prev": state.beta_previous, "beta": state.beta_current}
    history = spec.retains_history

    def weigh(kids, retained=()):
        return assign_pbsmc_weights(retained, kids, arena, t, n, alpha,
                                    state.beta_previous, state.beta_current, history)
    return weigh, info


# --------------------------------- master loop --------------------------------
def initialize(run: SearchRun) -> Pool:
    """P_0: N one-step samples from the root, W_0 = r^beta_0 (= r unless powered)."""
    kids, _ = _expand(run, [(ROOT, run.config.child_budget)])
    scores = run.arena.prm_array(kids)
    if run.spec.powered:
        beta0 = run.spec.schedule.beta0
        run.pool = Pool(ids=kids, weights=np.power(scores, beta0), round=0)
        run.schedule = initial_state(run.spec.schedule, run.config.horizon, scores)
    else:
        run.pool = _prm_pool(run.arena, kids, 0, run.spec.method == Method.BEAM and run.spec.cumulative_mean)
    run.ledger.new_generation_units += len(kids)
    CHILDREN_TOTAL.labels(run.method.value).inc(len(kids))
    run.previous_children = set(kids)
    run.pool_sizes.append(len(run.pool))
    return run.pool


def run_round(run: SearchRun, t: int) -> SearchRun:
    """Select -> expand -> score -> memory update for round t."""
    cfg, arena = run.config, run.arena
    parents, rho = _select_parents(run)
    counts = expansion_counts(len(parents), cfg.child_budget, cfg.parent_budget)
    plan = [(p, c) for p, c in zip(parents, counts) if c > 0]

    backtrack = sum(
        arena.depth(p) for p in {p for p, _ in plan}
        if not arena.is_terminal(p) and p not in run.previous_children
    )
    weigh, info = _weights_fn(run, t)
    kids, frozen = _expand(run, plan)

    retained = None
    if run.spec.retains_history:
        retained = sample_retained(run.pool, t, cfg.child_budget, run.rng)
    run.pool = memory_update(run.spec, run.pool, kids, weigh, retained=retained)

    if run.schedule is not None:
        run.schedule = advance(run.schedule, arena.prm_array(run.pool.ids))

    new_units = len(kids) - frozen
    run.ledger.new_generation_units += new_units
    run.ledger.backtrack_recompute_units += backtrack
    run.trace.append(RoundTrace(
        round=t, parents=parents, children=kids, frozen=frozen, pool_size=len(run.pool),
        new_units=new_units, backtrack_units=backtrack, rho=rho, log_space=run.pool.log_space, **info,
    ))
    run.pool_sizes.append(len(run.pool))
    run.previous_children = set(kids)
    run.rounds_run = t

    label = run.method.value
    ROUNDS_TOTAL.labels(label).inc()
    CHILDREN_TOTAL.labels(label).inc(new_units)
    BACKTRACK_UNITS_TOTAL.labels(label).inc(backtrack)

    if cfg.early_stop:
        live = run.pool.positive_mask()
        if live.any() and arena.terminal_array(run.pool.ids)[live].all():
            run.done = True
    return run


# --------------------------------- final answer -------------------------------
def _ranking_scores(run: SearchRun, ids: Sequence[int]) -> np.ndarray:
    if run.spec.cumulative_mean:
        return run.arena.cumulative_mean_array(ids)
    return run.arena.prm_array(ids)


def best_terminal(run: SearchRun, ids: Optional[Sequence[int]] = None) -> FinalAnswer:
    """Highest-scoring terminal prefix among `ids` (default: the whole run); ties go to the smallest id."""
    arena = run.arena
    cands = sorted(set(arena.terminal_ids() if ids is None else [i for i in ids if arena.is_terminal(i)]))
    if not cands:
        raise NoTerminalTrace(f"{run.problem_id}: no terminal prefix")
    scores = _ranking_scores(run, cands)
    i = cands[int(np.argmax(scores))]   # argmax keeps the first maximum
    return FinalAnswer(answer=arena.answer(i), prefix_id=i, score=float(arena.prm(i)))


def _sampled_terminal(run: SearchRun) -> FinalAnswer:
    arena, pool = run.arena, run.pool
    mask = arena.terminal_array(pool.ids) & pool.positive_mask()
    if not mask.any():
        return best_terminal(run)
    sub = Pool(ids=pool.ids[mask], weights=pool.weights[mask], round=pool.round, log_space=pool.log_space)
    i = multinomial_sample(sub, 1, run.rng)[0]
    return FinalAnswer(answer=arena.answer(i), prefix_id=i, score=float(arena.prm(i)))


def _majority(run: SearchRun) -> FinalAnswer:
    arena = run.arena
    finals = [int(i) for i in run.pool.ids if arena.is_terminal(int(i))]
    if not finals:
        raise NoTerminalTrace(f"{run.problem_id}: no rollout finished")
    votes = Counter(arena.answer(i) for i in finals)
    top = max(votes.values())
    tied = [i for i in finals if votes[arena.answer(i)] == top]
    best = best_terminal(run, tied)
    return best.model_copy(update={"votes": top})


def _deepest(run: SearchRun) -> FinalAnswer:
    arena = run.arena
    if len(arena) == 0:
        return FinalAnswer(valid=False)
    depth = np.array([arena.depth(i) for i in range(len(arena))])
    prm = arena.prm_array(range(len(arena)))
    i = int(np.lexsort((np.arange(len(arena)), -prm, -depth))[0])
    return FinalAnswer(answer=None, prefix_id=i, score=float(prm[i]), valid=False)


def finalize(run: SearchRun) -> FinalAnswer:
    try:
        if run.method == Method.SELF_CONSISTENCY:
            return _majority(run)
        if run.spec.final_from_pool_sample:
            return _sampled_terminal(run)
        return best_terminal(run)
    except NoTerminalTrace as e:
        log.info("%s; returning the deepest prefix as invalid", e)
        return _deepest(run)


# --------------------------------- entry points -------------------------------
def _result(run: SearchRun, t0: float, final: Optional[FinalAnswer] = None,
            correct: Optional[bool] = None, error: Optional[str] = None) -> SearchResult:
    cfg = run.config
    return SearchResult(
        problem_id=run.problem_id,
        method=cfg.method,
        child_budget=cfg.child_budget,
        seed=cfg.rng_seed,
        final=final,
        correct=correct,
        ledger=run.ledger.model_copy(),
        rounds_run=run.rounds_run,
        pool_sizes=list(run.pool_sizes),
        trace=list(run.trace),
        failed=error is not None,
        error=error,
        wall_time_s=round(time.perf_counter() - t0, 6),
    )


def run_search(config: SearchConfig, backend: Backend, problem_id: str = "problem") -> SearchResult:
    t0 = time.perf_counter()
    run = SearchRun(config, backend, problem_id)
    try:
        initialize(run)
        for t in range(1, config.horizon + 1):
            if run.done:
                break
            run_round(run, t)
        final = finalize(run)
    except (BackendError, AllWeightsZero) as e:
        err = f"{type(e).__name__}: {e}"
        log.warning("search %s/%s failed at round %d: %s", config.method.value, problem_id, run.rounds_run + 1, err)
        write_event("search_failed", {"problem_id": problem_id, "method": config.method.value,
                                      "N": config.child_budget, "seed": config.rng_seed, "error": err})
        SEARCH_FAILURES_TOTAL.labels(config.method.value).inc()
        return _result(run, t0, error=err)

    correct = backend.check_answer(final.answer)
    if not final.valid and correct is not None:
        correct = False
    write_event("search_end", {
        "problem_id": problem_id, "method": config.method.value, "N": config.child_budget,
        "seed": config.rng_seed, "rounds": run.rounds_run, "answer": final.answer, "correct": correct,
        "units": run.ledger.new_generation_units,
    })
    return _result(run, t0, final, correct)


def _as_baseline(config: SearchConfig, method: Method) -> SearchConfig:
    if config.method == method:
        return config
    return SearchConfig(
        child_budget=config.child_budget, horizon=config.horizon, rng_seed=config.rng_seed,
        spec=MethodSpec(method=method), temperature=config.temperature, early_stop=config.early_stop,
    )


def run_best_of_n(config: SearchConfig, backend: Backend, problem_id: str = "problem") -> SearchResult:
    """N independent rollouts to the horizon, answer of the best-scored finished one."""
    return run_search(_as_baseline(config, Method.BEST_OF_N), backend, problem_id)


def run_self_consistency(config: SearchConfig, backend: Backend, problem_id: str = "problem") -> SearchResult:
    """N independent rollouts, majority vote over their answers."""
    return run_search(_as_baseline(config, Method.SELF_CONSISTENCY), backend, problem_id)
