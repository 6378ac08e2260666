# poolsearch/tests/test_oracle.py
import math

import numpy as np
import pytest

from poolsearch.backends.synthetic import SyntheticTreeEnv, make_random_env
from poolsearch.core.arena import PrefixArena
from poolsearch.errors import EnvTooLarge
from poolsearch.models import ROOT, Child
from poolsearch.oracle import (
    OracleTable, blocker_predicate, correction_factor_residual, enumerate_env, highest_sigma_row, highest_target_row,
    log_total, mis_identity_check, mis_identity_residual, normalization_residual, run_oracle_suite,
    shared_normalizer_residual, sigma_additivity_residual,
)
from poolsearch.pbsmc import assign_pbsmc_weights


def _two_by_two(leaves=(0, 1, 1, 1), **kw):
    return SyntheticTreeEnv.from_labels(2, 2, list(leaves), **kw)


def test_two_by_two_sigma():
    table = enumerate_env(_two_by_two())
    assert len(table) == 6
    depth_one = table.sigma[table.lengths == 1]
    assert depth_one.tolist() == pytest.approx([0.25, 0.0])
    assert table.sigma[table.row(2, 0)] == pytest.approx(0.25)
    assert table.correct.sum() == 1


def test_sigma_adds_up_to_root_value():
    env = make_random_env(3, 4, env_seed=2)
    table = enumerate_env(env)
    assert sigma_additivity_residual(table) < 1e-12
    total = math.fsum(table.sigma[table.lengths == 1].tolist())
    assert total == pytest.approx(env.value[0][0])


def test_rows_below_terminals_are_unreachable():
    probs = [np.full((1, 2), 0.5), np.full((2, 2), 0.5)]
    answers = [np.array([-1]), np.array([0, -1]), np.array([1, 1, 0, 1])]
    env = SyntheticTreeEnv(2, 2, probs, answers)
    table = enumerate_env(env)
    assert len(table) == 4
    with pytest.raises(KeyError):
        table.row(2, 0)
    assert table.path(table.row(2, 2)) == [1, 0]


def test_enumeration_cap():
    with pytest.raises(EnvTooLarge):
        enumerate_env(make_random_env(3, 3), cap=20)


def test_log_total():
    assert log_total(np.log([1.0, 2.0, 3.0])) == pytest.approx(math.log(6.0))
    assert log_total(np.array([-np.inf])) == -math.inf
    assert log_total(np.array([1000.0, 1000.0])) == pytest.approx(1000.0 + math.log(2.0))


def test_zero_power_target_is_the_generator():
    table = enumerate_env(make_random_env(2, 3, env_seed=4))
    probs = table.target_probabilities(0.0, 1)
    keep = table.lengths <= 2
    assert probs[~keep].sum() == 0
    expected = table.p[keep] / table.p[keep].sum()
    assert probs[keep].tolist() == pytest.approx(expected.tolist())


def test_constant_f_mis_residual_is_zero():
    assert mis_identity_residual([1, 2, 3], [3, 2, 1], [1, 1, 1], 0.3, 1.0) < 1e-12


def test_indicator_f_mis_residual():
    f = np.array([0.0, 1.0, 0.0])
    assert mis_identity_residual([0.2, 0.5, 0.3], [0.6, 0.3, 0.1], [0.1, 0.1, 0.8], 0.3, f) < 1e-12


def test_mis_rejects_missing_support():
    with pytest.raises(ValueError):
        mis_identity_residual([1, 1], [1, 0], [1, 0], 0.5, 1.0)


@pytest.mark.parametrize("env_seed", [0, 1, 2])
def test_mis_identity_on_enumerated_target(env_seed):
    table = enumerate_env(make_random_env(3, 3, env_seed=env_seed))
    f = (table.lengths == 2).astype(float)
    assert mis_identity_check(table, f, 0.6, 1.0, 4.0, 2) < 1e-12


@pytest.mark.parametrize("t", [1, 2, 3])
def test_shared_normalizer(t):
    table = enumerate_env(make_random_env(3, 4, env_seed=6))
    assert shared_normalizer_residual(table, 3.5, t) < 1e-10


@pytest.mark.parametrize("t", [1, 2, 3])
def test_runtime_factor_matches_enumeration(t):
    table = enumerate_env(make_random_env(2, 4, env_seed=8, noise_weight=0.5))
    assert correction_factor_residual(table, 0.7, 2.0, 5.5, t) < 1e-10


def test_target_normalizes():
    table = enumerate_env(make_random_env(3, 3, env_seed=3))
    assert normalization_residual(table, 12.0, 2) < 1e-12


def test_two_by_two_round_weights_match_enumeration():
    env = _two_by_two(noise_weight=0.4, noise=[np.zeros(1), np.array([0.3, 0.8]), np.array([0.1, 0.2, 0.6, 0.9])])
    table = enumerate_env(env)
    arena = PrefixArena()
    ids = {}
    for node in range(2):
        ids[(1, node)] = arena.add(ROOT, Child(step=node, depth=1, handle=node), env.prm[1][node])
    for node in range(4):
        parent = ids[(1, node // 2)]
        ans = env.answer_at(2, node)
        ids[(2, node)] = arena.add(parent, Child(step=node % 2, depth=2, handle=node, terminal=True, answer=ans),
                                   env.prm[2][node])
    retained = [ids[(1, 0)], ids[(1, 1)]]
    children = [ids[(2, n)] for n in range(4)][:2]
    alpha, beta_prev, beta = 0.6, 1.0, 2.5
    pool = assign_pbsmc_weights(retained, children, arena, t=1, n=2, alpha=alpha,
                                beta_prev=beta_prev, beta=beta)
    ratio = table.correction_ratio(alpha, beta_prev, beta, 1)
    for pid, w in zip(pool.ids.tolist(), pool.weights.tolist()):
        depth = arena.depth(pid)
        f = ratio[table.row(depth, int(arena.handle(pid)))]
        expected = (1 - alpha) * f if depth == 1 else alpha * f
        assert w == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("t", [1, 2])
def test_shared_normalizer_with_early_terminal(t, early_stop_env):
    table = enumerate_env(early_stop_env)
    assert shared_normalizer_residual(table, 2.5, t) < 1e-10


@pytest.mark.parametrize("t,beta_prev,beta", [(2, 1.0, 1.0), (2, 1.5, 4.0), (1, 2.0, 3.0)])
def test_runtime_factor_matches_enumeration_with_early_terminal(t, beta_prev, beta, early_stop_env):
    table = enumerate_env(early_stop_env)
    assert correction_factor_residual(table, 0.6, beta_prev, beta, t) < 1e-10


def test_mis_identity_with_early_terminal(early_stop_env):
    table = enumerate_env(early_stop_env)
    f = np.zeros(len(table))
    f[table.row(2, 0)] = 1.0
    assert mis_identity_check(table, f, 0.6, 1.5, 4.0, 2) < 1e-12


def test_frozen_terminal_round_weights_match_enumeration(early_stop_env):
    env = early_stop_env
    table = enumerate_env(env)
    arena = PrefixArena()
    ids = {}
    for node in range(2):
        ids[(1, node)] = arena.add(ROOT, Child(step=node, depth=1, handle=node), env.prm[1][node])
    for node in range(4):
        terminal = bool(env.terminal[2][node])
        ids[(2, node)] = arena.add(ids[(1, node // 2)],
                                   Child(step=node % 2, depth=2, handle=node, terminal=terminal,
                                         answer=env.answer_at(2, node)), env.prm[2][node])
    for node in (2, 5):
        ids[(3, node)] = arena.add(ids[(2, node // 2)],
                                   Child(step=node % 2, depth=3, handle=node, terminal=True,
                                         answer=env.answer_at(3, node)), env.prm[3][node])
    retained = [ids[(1, 0)], ids[(2, 0)], ids[(2, 1)], ids[(1, 1)]]
    children = [ids[(2, 0)], ids[(3, 2)], ids[(3, 5)], ids[(2, 0)]]
    retained = retained + retained
    alpha, beta_prev, beta, t = 0.6, 1.5, 4.0, 2
    pool = assign_pbsmc_weights(retained, children, arena, t=t, n=4, alpha=alpha,
                                beta_prev=beta_prev, beta=beta)
    ratio = table.correction_ratio(alpha, beta_prev, beta, t)
    for k, (pid, w) in enumerate(zip(pool.ids.tolist(), pool.weights.tolist())):
        f = ratio[table.row(arena.depth(pid), int(arena.handle(pid)))]
        expected = (1 - alpha) * f / t if k < len(retained) else alpha * f
        assert w == pytest.approx(expected, rel=1e-10)


def test_highest_target_row_follows_beta(early_stop_env):
    table = enumerate_env(early_stop_env)
    assert highest_target_row(table, 1.0, 1) == (1, 0)
    assert highest_target_row(table, 20.0, 2) == (3, 5)


def test_frontier_expectation_keeps_earlier_terminals(early_stop_env):
    table = enumerate_env(early_stop_env)
    f = np.zeros(len(table))
    f[table.row(2, 0)] = 1.0
    assert table.restricted_expectation(f, 1.0, 2) > 0
    keep = (table.lengths == 3) | (table.terminal & (table.lengths < 3))
    mass = table.p * table.prm
    expected = mass[table.row(2, 0)] / mass[keep].sum()
    assert table.restricted_expectation(f, 1.0, 3) == pytest.approx(expected, rel=1e-12)


def test_blocker_predicate_cases():
    faithful = enumerate_env(_two_by_two(noise_weight=1.0))
    assert not blocker_predicate(faithful, 1, 1)
    assert not blocker_predicate(faithful, 1, 2)

    bias = [np.zeros(1), np.array([-0.5, 0.8]), np.zeros(4)]
    blocked = enumerate_env(_two_by_two(bias=bias))
    assert blocker_predicate(blocked, 1, 1)


def test_highest_sigma_row():
    table = enumerate_env(_two_by_two())
    assert highest_sigma_row(table) == (1, 0)
    assert highest_sigma_row(table, length=2) == (2, 0)


def test_json_round_trip():
    table = enumerate_env(make_random_env(2, 3, env_seed=9))
    back = OracleTable.from_json(table.to_json())
    assert back.lengths.tolist() == table.lengths.tolist()
    assert back.nodes.tolist() == table.nodes.tolist()
    assert np.allclose(back.log_rpa, table.log_rpa)
    assert np.allclose(back.sigma, table.sigma)


def test_quick_oracle_suite_passes():
    results = run_oracle_suite(quick=True)
    assert [r.name for r in results] == [
        "mis_identity", "shared_normalizer", "correction_factor", "table_identities", "schedule_bounds",
    ]
    assert all(r.passed for r in results), [r.detail for r in results if not r.passed]


def test_log_normalizer_matches_direct_sum():
    table = enumerate_env(make_random_env(3, 3, env_seed=5))
    keep = table.lengths <= 2
    direct = math.fsum(np.exp(table.log_p[keep] + 2.0 * np.log(table.prm[keep])).tolist())
    assert table.log_normalizer(2.0, 2) == pytest.approx(math.log(direct), rel=1e-10)
