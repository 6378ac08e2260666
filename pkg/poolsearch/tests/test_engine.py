# poolsearch/tests/test_engine.py
import numpy as np
import pytest

from poolsearch.backends.base import Backend
from poolsearch.backends.synthetic import (
    SyntheticBackend, SyntheticTreeEnv, TrapParams, make_random_env, make_trap_env,
)
from poolsearch.core.pool import Pool
from poolsearch.engine import (
    SearchRun, best_terminal, expansion_counts, finalize, initialize, run_best_of_n, run_round,
    run_search, run_self_consistency,
)
from poolsearch.errors import ServiceError
from poolsearch.models import ROOT, Child, Method, MethodSpec, ScheduleParams, SearchConfig


def _cfg(method, n=8, m=None, horizon=3, seed=0, early_stop=False, **spec_kw):
    return SearchConfig(child_budget=n, parent_budget=m, horizon=horizon, rng_seed=seed,
                        spec=MethodSpec(method=method, **spec_kw), early_stop=early_stop)


def _deep_env(seed=1):
    return make_random_env(2, 6, env_seed=seed)


def _trap_env(seed):
    return make_trap_env(TrapParams(branching=2, depth=5, env_seed=seed))


def _rounds(cfg, env, rounds):
    run = SearchRun(cfg, SyntheticBackend(env))
    initialize(run)
    for t in range(1, rounds + 1):
        run_round(run, t)
    return run


def _single_path_env(depth=3, answer=0):
    probs = [np.tile([1.0, 0.0], (2 ** d, 1)) for d in range(depth)]
    leaves = [answer] + [1] * (2 ** depth - 1)
    return SyntheticTreeEnv.from_labels(2, depth, leaves, probs)


class _FailingBackend(Backend):
    def expand(self, parent, path, count, temperature, rng):
        raise ServiceError(503, "down")


# ------------------------------- budgets --------------------------------------
def test_initial_pool_has_n_entries():
    run = SearchRun(_cfg(Method.BEAM), SyntheticBackend(_deep_env()))
    pool = initialize(run)
    assert len(pool) == 8
    assert run.ledger.new_generation_units == 8


def test_deterministic_root_gives_distinct_ids():
    run = SearchRun(_cfg(Method.GREEDY), SyntheticBackend(_single_path_env()))
    initialize(run)
    assert len(set(run.pool.ids.tolist())) == 8
    assert {run.arena.get(i).step for i in run.pool.ids.tolist()} == {0}


@pytest.mark.parametrize("n_parents,n,m,counts", [
    (8, 32, 8, [4] * 8),
    (3, 32, 8, [11, 11, 10]),
    (8, 8, 8, [1] * 8),
    (0, 8, 2, []),
])
def test_expansion_counts(n_parents, n, m, counts):
    assert expansion_counts(n_parents, n, m) == counts


def test_beam_expands_m_parents_b_times():
    run = _rounds(_cfg(Method.BEAM, n=32, m=8), _deep_env(), 2)
    for tr in run.trace:
        assert len(tr.parents) == 8 and len(set(tr.parents)) == 8
        assert len(tr.children) == 32
        parents_of_kids = [run.arena.parent(k) for k in tr.children]
        assert parents_of_kids == [p for p in tr.parents for _ in range(4)]
    assert run.pool_sizes == [32, 32, 32]


def test_pbsmc_pool_grows_with_history():
    run = _rounds(_cfg(Method.PB_SMC), _deep_env(), 3)
    assert run.pool_sizes == [8, 16, 24, 32]
    assert all(tr.alpha is not None and tr.beta >= tr.beta_prev for tr in run.trace)


def test_greedy_pool_is_persistent():
    run = _rounds(_cfg(Method.GREEDY, m=2), _deep_env(), 3)
    assert run.pool_sizes == [8 * (t + 1) for t in range(4)]


def test_units_and_frontier_backtrack():
    run = _rounds(_cfg(Method.BEAM, m=2), _deep_env(), 3)
    assert run.ledger.new_generation_units == 32
    assert run.ledger.backtrack_recompute_units == 0
    smc = _rounds(_cfg(Method.STANDARD_SMC), _deep_env(), 3)
    assert smc.ledger.backtrack_recompute_units == 0


def test_persistent_backtrack_is_ledgered():
    run = _rounds(_cfg(Method.GREEDY, m=2), _deep_env(), 4)
    assert run.ledger.backtrack_recompute_units == sum(tr.backtrack_units for tr in run.trace)
    assert run.ledger.scorer_calls == run.ledger.new_generation_units


# ------------------------------- reproducibility ------------------------------
@pytest.mark.parametrize("method", [Method.BEAM, Method.STANDARD_SMC, Method.SPS, Method.PB_SMC])
def test_same_seed_same_run(method):
    env = _deep_env(3)
    m = None if MethodSpec(method=method).particle else 2
    a = run_search(_cfg(method, m=m, horizon=6, seed=11), SyntheticBackend(env))
    b = run_search(_cfg(method, m=m, horizon=6, seed=11), SyntheticBackend(env))
    assert [t.parents for t in a.trace] == [t.parents for t in b.trace]
    assert a.final == b.final
    assert a.ledger == b.ledger


@pytest.mark.parametrize("seed", range(20))
def test_full_subpool_reduces_sps_to_greedy(seed):
    env = _deep_env(seed)
    sps = _rounds(_cfg(Method.SPS, m=2, seed=seed, rho_mode="fixed", rho=1.0), env, 4)
    greedy = _rounds(_cfg(Method.GREEDY, m=2, seed=seed), env, 4)
    assert [t.parents for t in sps.trace] == [t.parents for t in greedy.trace]
    assert sps.pool.ids.tolist() == greedy.pool.ids.tolist()


@pytest.mark.parametrize("seed", range(20))
def test_non_persistent_greedy_is_beam(seed):
    env = _deep_env(seed)
    greedy = _rounds(_cfg(Method.GREEDY, m=2, seed=seed, persistent=False), env, 4)
    beam = _rounds(_cfg(Method.BEAM, m=2, seed=seed), env, 4)
    assert [t.parents for t in greedy.trace] == [t.parents for t in beam.trace]


@pytest.mark.parametrize("seed", range(20))
def test_pbsmc_without_mixture_or_power_is_smc(seed):
    env = _deep_env(seed) if seed % 2 else _trap_env(seed)
    sched = ScheduleParams(alpha=1.0, retain_history=False, adaptive_beta=False)
    pb = _rounds(_cfg(Method.PB_SMC, seed=seed, schedule=sched), env, 4)
    smc = _rounds(_cfg(Method.STANDARD_SMC, seed=seed), env, 4)
    assert [t.parents for t in pb.trace] == [t.parents for t in smc.trace]
    assert pb.pool.ids.tolist() == smc.pool.ids.tolist()
    assert np.allclose(pb.pool.weights, smc.pool.weights)


@pytest.mark.parametrize("seed", range(20))
def test_power_smc_is_pbsmc_without_history(seed):
    env = _deep_env(seed) if seed % 2 else _trap_env(seed)
    power = _rounds(_cfg(Method.POWER_SMC, seed=seed), env, 4)
    sched = ScheduleParams(alpha=1.0, retain_history=False)
    pb = _rounds(_cfg(Method.PB_SMC, seed=seed, schedule=sched), env, 4)
    assert [t.parents for t in power.trace] == [t.parents for t in pb.trace]
    assert [(t.beta_prev, t.beta) for t in power.trace] == [(t.beta_prev, t.beta) for t in pb.trace]
    assert np.allclose(power.pool.weights, pb.pool.weights)
    assert power.pool_sizes == [8] * 5
    assert all(t.alpha == 1.0 for t in power.trace)
    assert power.trace[-1].beta > power.trace[0].beta_prev


def test_power_smc_weights_frontier_by_power_step():
    run = _rounds(_cfg(Method.POWER_SMC), _deep_env(3), 2)
    last = run.trace[-1]
    ids = run.pool.ids
    r, rpa = run.arena.prm_array(ids), run.arena.parent_prm_array(ids)
    expected = (r / rpa) ** last.beta_prev * r ** (last.beta - last.beta_prev)
    weights = np.exp(run.pool.weights) if run.pool.log_space else run.pool.weights
    assert np.allclose(weights, expected)


@pytest.mark.parametrize("seed", range(5))
def test_backtrack_smc_holds_beta_and_keeps_history(seed):
    run = _rounds(_cfg(Method.BACKTRACK_SMC, seed=seed), _deep_env(seed), 3)
    assert run.pool_sizes == [8, 16, 24, 32]
    for tr in run.trace:
        assert tr.beta == tr.beta_prev == 1.0
        assert 0 < tr.alpha < 1
    fixed = _rounds(_cfg(Method.PB_SMC, seed=seed, schedule=ScheduleParams(adaptive_beta=False)), _deep_env(seed), 3)
    assert [t.parents for t in run.trace] == [t.parents for t in fixed.trace]
    assert np.allclose(run.pool.weights, fixed.pool.weights)


def test_cumulative_mean_beam_ranks_by_path_average():
    run = _rounds(_cfg(Method.BEAM, m=2, cumulative_mean=True), _deep_env(8), 4)
    for before, tr in zip(run.trace, run.trace[1:]):
        kids = np.asarray(before.children)
        cm = run.arena.cumulative_mean_array(kids)
        chosen = np.isin(kids, tr.parents)
        assert chosen.sum() == 2
        assert cm[chosen].min() >= cm[~chosen].max()
    assert np.allclose(run.pool.weights, run.arena.cumulative_mean_array(run.pool.ids))


# ------------------------------- termination ----------------------------------
def test_early_stop_when_pool_is_all_terminal():
    env = _single_path_env(depth=1)
    res = run_search(_cfg(Method.BEAM, m=2, horizon=5, early_stop=True), SyntheticBackend(env))
    assert res.rounds_run == 1
    assert res.trace[0].frozen == 8
    assert res.ledger.new_generation_units == 8
    assert res.correct


def test_runs_full_horizon_without_early_stop():
    env = _single_path_env(depth=1)
    res = run_search(_cfg(Method.BEAM, m=2, horizon=4), SyntheticBackend(env))
    assert res.rounds_run == 4


# ------------------------------- final answer ---------------------------------
def _manual_run(method=Method.BEAM, n=3):
    cfg = SearchConfig(child_budget=n, horizon=1, spec=MethodSpec(method=method))
    return SearchRun(cfg, Backend())


def _add_terminal(run, score, answer):
    return run.arena.add(ROOT, Child(step=answer, depth=1, terminal=True, answer=answer), score)


def test_best_terminal_takes_highest_score():
    run = _manual_run()
    for score, ans in [(0.3, "a"), (0.9, "b"), (0.7, "c")]:
        _add_terminal(run, score, ans)
    assert finalize(run).answer == "b"


def test_best_terminal_tie_goes_to_smallest_id():
    run = _manual_run()
    first = _add_terminal(run, 0.8, "x")
    _add_terminal(run, 0.8, "y")
    assert best_terminal(run).prefix_id == first


def test_single_terminal_trace():
    run = _manual_run()
    run.arena.add(ROOT, Child(step="s", depth=1), 0.9)
    _add_terminal(run, 0.2, "only")
    assert finalize(run).answer == "only"


def test_self_consistency_majority():
    run = _manual_run(Method.SELF_CONSISTENCY)
    ids = [_add_terminal(run, s, a) for s, a in [(0.2, "A"), (0.3, "A"), (0.99, "B")]]
    run.pool = Pool(ids=ids, weights=[1.0] * 3)
    final = finalize(run)
    assert final.answer == "A"
    assert final.votes == 2


def test_no_terminal_returns_invalid_deepest():
    run = _manual_run()
    a = run.arena.add(ROOT, Child(step="s", depth=1), 0.9)
    b = run.arena.add(a, Child(step="t", depth=2), 0.1)
    final = finalize(run)
    assert not final.valid
    assert final.prefix_id == b and final.answer is None


def test_sampled_final_answer_comes_from_pool():
    env = make_random_env(2, 2, env_seed=2)
    res = run_search(_cfg(Method.PB_SMC, horizon=3, final_from_pool_sample=True), SyntheticBackend(env))
    assert res.final is not None and res.final.valid


def test_invalid_answer_counts_as_wrong():
    env = _deep_env(7)
    res = run_search(_cfg(Method.BEAM, m=2, horizon=2), SyntheticBackend(env))
    assert res.final is not None and not res.final.valid
    assert res.correct is False


# ------------------------------- baselines ------------------------------------
def test_best_of_n_on_deterministic_env():
    env = _single_path_env(depth=3)
    res = run_best_of_n(_cfg(Method.BEAM, m=2, horizon=3), SyntheticBackend(env))
    assert res.method == Method.BEST_OF_N
    assert res.final.answer == "ans0" and res.correct
    assert res.ledger.new_generation_units == 8 * 3


def test_best_of_n_single_rollout():
    env = _single_path_env(depth=2)
    res = run_best_of_n(_cfg(Method.BEST_OF_N, n=1, horizon=2), SyntheticBackend(env))
    assert res.final.answer == "ans0"


def test_self_consistency_votes_over_rollouts():
    env = _single_path_env(depth=2, answer=2)
    res = run_self_consistency(_cfg(Method.BEAM, m=2, horizon=2), SyntheticBackend(env))
    assert res.method == Method.SELF_CONSISTENCY
    assert res.final.answer == "ans2" and res.final.votes == 8
    assert res.correct is False


def test_best_of_n_picks_highest_scored_rollout():
    env = make_random_env(3, 3, env_seed=12)
    run = _rounds(_cfg(Method.BEST_OF_N, n=16, horizon=3), env, 3)
    final = finalize(run)
    leaves = run.arena.terminal_ids()
    assert final.score == pytest.approx(max(env.prm[3][int(run.arena.handle(i))] for i in leaves))


# ------------------------------- failures -------------------------------------
def test_backend_failure_marks_result_failed():
    res = run_search(_cfg(Method.SPS, m=2), _FailingBackend())
    assert res.failed
    assert "ServiceError" in res.error
    assert res.final is None
