"""Exact identities checked by enumeration, plus the property suite behind `oracle-check`."""
from __future__ import annotations
import logging
import math
import time
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel

from ..backends.synthetic import TrapParams, make_random_env, make_trap_env
from ..pbsmc import alpha_at, beta_increment, concentration_statistic, log_correction_factors
from ..models import ScheduleParams
from ..pbsmc.schedule import ScheduleState
from .table import OracleTable, enumerate_env, highest_target_row, log_total

log = logging.getLogger(__name__)


def _fsum(x: np.ndarray) -> float:
    return math.fsum(np.asarray(x, dtype=np.float64).tolist())


def mis_identity_residual(target, q1, q2, alpha: float, f) -> float:
    """Max residual of E_P[f] against the two-proposal mixture identity, in both
    the normalized form and the self-normalized unnormalized form.

    `target`, `q1`, `q2` are nonnegative (possibly unnormalized) masses on a common
    finite state space; `f` is one value per state.
    """
    P = np.asarray(target, dtype=np.float64)
    Q1 = np.asarray(q1, dtype=np.float64)
    Q2 = np.asarray(q2, dtype=np.float64)
    f = np.broadcast_to(np.asarray(f, dtype=np.float64), P.shape)
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must be in [0, 1]")

    p = P / _fsum(P)
    q1n, q2n = Q1 / _fsum(Q1), Q2 / _fsum(Q2)
    mix = alpha * q1n + (1 - alpha) * q2n
    support = mix > 0
    if (p[~support] > 0).any():
        raise ValueError("target puts mass outside the mixture's support")

    w = np.zeros_like(p)
    w[support] = p[support] / mix[support]
    direct = _fsum(p * f)
    normalized = _fsum(alpha * q1n * f * w) + _fsum((1 - alpha) * q2n * f * w)

    # unnormalized target over an arbitrarily scaled mixture
    w_tilde = np.zeros_like(p)
    w_tilde[support] = P[support] / (mix[support] * _fsum(Q1))
    num = _fsum(alpha * q1n * f * w_tilde) + _fsum((1 - alpha) * q2n * f * w_tilde)
    den = _fsum(alpha * q1n * w_tilde) + _fsum((1 - alpha) * q2n * w_tilde)
    return max(abs(direct - normalized), abs(direct - num / den))


def _shifted(log_values: np.ndarray) -> np.ndarray:
    finite = np.isfinite(log_values)
    top = log_values[finite].max() if finite.any() else 0.0
    return np.exp(log_values - top)


def mis_identity_check(table: OracleTable, f_values, alpha: float, beta_prev: float,
                       beta: float, t: int) -> float:
    """The mixture identity with the round-t powered target and its two proposals."""
    return mis_identity_residual(
        _shifted(table.log_target(beta, t)),
        _shifted(table.log_q_branch(beta_prev, t)),
        _shifted(table.log_q_hist(beta_prev, t)),
        alpha,
        f_values,
    )


def shared_normalizer_residual(table: OracleTable, beta_prev: float, t: int) -> float:
    """Relative gap between sum(q~_branch), sum(q~_hist) and a direct Z_{t-1}.

    Terminals of length <= t carry their mass into q~_branch as frozen copies."""
    keep = table.lengths <= t
    z_direct = _fsum(np.exp(table.log_p[keep] + beta_prev * table.log_r[keep]))
    log_z = math.log(z_direct)
    gaps = [
        abs(math.expm1(log_total(table.log_q_branch(beta_prev, t)) - log_z)),
        abs(math.expm1(log_total(table.log_q_hist(beta_prev, t)) - log_z)),
    ]
    return max(gaps)


def correction_factor_residual(table: OracleTable, alpha: float, beta_prev: float,
                               beta: float, t: int) -> float:
    """Max relative error between the runtime F_t and pi~/q~_mix from enumeration."""
    rows = np.flatnonzero((table.lengths <= t + 1) & np.isfinite(table.log_p))
    log_f = log_correction_factors(table.prm[rows], table.parent_prm[rows], table.lengths[rows],
                                   t, alpha, beta_prev, beta, terminal=table.terminal[rows])
    log_ratio = table.log_target(beta, t)[rows] - table.log_q_mix(alpha, beta_prev, t)[rows]
    return float(np.max(np.abs(np.expm1(log_f - log_ratio)))) if rows.size else 0.0


def normalization_residual(table: OracleTable, beta: float, t: int) -> float:
    return abs(_fsum(table.target_probabilities(beta, t)) - 1.0)


def sigma_additivity_residual(table: OracleTable) -> float:
    """max |sigma(z) - sum of sigma over z's children| over non-terminal z."""
    b, worst = table.branching, 0.0
    for d in range(1, table.max_depth):
        par = np.flatnonzero((table.lengths == d) & ~table.terminal)
        kids = np.flatnonzero(table.lengths == d + 1)
        if par.size == 0:
            continue
        sums = np.bincount(table.nodes[kids] // b, weights=table.sigma[kids], minlength=b ** d)
        worst = max(worst, float(np.max(np.abs(table.sigma[par] - sums[table.nodes[par]]))))
    return worst


# --------------------------------- suite --------------------------------------
class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def _timed(name: str, fn: Callable[[], tuple]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as e:  # a crashing property is a failing property
        ok, detail = False, f"{type(e).__name__}: {e}"
    res = CheckResult(name=name, passed=bool(ok), detail=detail, seconds=round(time.perf_counter() - t0, 3))
    log.info("%s %s (%s) %.2fs", "PASS" if res.passed else "FAIL", name, detail, res.seconds)
    return res


def _random_envs(count: int, seed: int, max_b: int = 4, max_d: int = 6):
    rng = np.random.default_rng(seed)
    for i in range(count):
        b = int(rng.integers(2, max_b + 1))
        d = int(rng.integers(2, max_d + 1))
        yield make_random_env(b, d, env_seed=seed + i, noise_weight=float(rng.uniform(0.3, 1.0)))


def _suite_envs(count: int, seed: int):
    """Random envs, then trap envs whose correct answers stop at depth 2."""
    yield from _random_envs(count, seed)
    for i in range(max(1, count // 2)):
        yield make_trap_env(TrapParams(branching=2 + i % 2, depth=4, env_seed=seed + i))


def check_mis_toys(count: int = 50, seed: int = 0, tol: float = 1e-12) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(count):
        k = int(rng.integers(3, 9))
        alpha = round(0.1 * (1 + i % 9), 1)
        P, Q1, Q2 = rng.random(k) + 0.01, rng.random(k) + 0.01, rng.random(k) + 0.01
        worst = max(worst, mis_identity_residual(P, Q1, Q2, alpha, rng.normal(size=k)))
    return worst < tol, f"max residual {worst:.2e} over {count} toys"


def check_shared_normalizer(count: int = 20, seed: int = 100, tol: float = 1e-10) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for env in _suite_envs(count, seed):
        table = enumerate_env(env)
        for t in range(1, env.depth):
            worst = max(worst, shared_normalizer_residual(table, float(rng.uniform(0, 10)), t))
    return worst < tol, f"max relative gap {worst:.2e} over {count} envs"


def check_correction_factor(count: int = 10, seed: int = 200, tol: float = 1e-10) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for env in _suite_envs(count, seed):
        table = enumerate_env(env)
        for t in (1, 2, 3):
            beta_prev = float(rng.uniform(0, 10))
            beta = beta_prev + float(rng.uniform(0, 9))
            alpha = float(rng.uniform(0.5, 0.95))
            worst = max(worst, correction_factor_residual(table, alpha, beta_prev, beta, t))
    return worst < tol, f"max relative error {worst:.2e} over {count} envs x 3 rounds"


def check_table_identities(count: int = 10, seed: int = 300, tol: float = 1e-12) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for env in _random_envs(count, seed):
        table = enumerate_env(env)
        worst = max(worst, sigma_additivity_residual(table))
        for t in range(1, env.depth):
            worst = max(worst, normalization_residual(table, float(rng.uniform(0, 20)), t))
            f = (table.lengths == t).astype(float)
            worst = max(worst, mis_identity_check(table, f, float(rng.uniform(0.5, 0.9)),
                                                  1.0, float(rng.uniform(1, 10)), t))
    return worst < tol, f"max residual {worst:.2e}"


def check_schedule_bounds(draws: int = 10_000, seed: int = 400) -> tuple:
    rng = np.random.default_rng(seed)
    gamma = 9.0
    for _ in range(draws):
        c = int(rng.integers(1, 200))
        scores = rng.uniform(1e-4, 1.0, size=c)
        delta = beta_increment(gamma, concentration_statistic(scores), c)
        if not gamma / c <= delta <= gamma:
            return False, f"delta {delta} outside [{gamma / c}, {gamma}] at C={c}"
    uniform = beta_increment(gamma, concentration_statistic(np.full(16, 0.5)), 16)
    peaked = beta_increment(gamma, concentration_statistic(np.r_[1.0, np.zeros(15)]), 16)
    ok = uniform == gamma and peaked == gamma / 16
    state = ScheduleState(beta_current=1, beta_previous=1, gamma=gamma, g_min=0.4, horizon=30)
    alphas = [alpha_at(state, t) for t in range(1, 31)]
    ok = ok and all(a <= b for a, b in zip(alphas, alphas[1:]))
    return ok, f"{draws} draws; uniform delta {uniform}, concentrated delta {peaked:.4f}"


def check_convergence(trials: int = 200, n_values: Optional[List[int]] = None, seed: int = 500,
                      min_truth: float = 1e-3) -> tuple:
    """Error ladder for the indicator of the prefix the final powered target favors.

    The indicator is picked at beta_0 + t * gamma, the largest beta the adaptive
    schedule can reach.
    """
    from .probe import convergence_probe, probe_env

    env = probe_env()
    table = enumerate_env(env)
    t = env.depth - 1
    sched = ScheduleParams()
    target = highest_target_row(table, sched.beta0 + t * sched.gamma, t)
    points = convergence_probe(env, n_values=n_values or [64, 128, 256, 512, 1024], t=t,
                               f=lambda d, n: float((d, n) == target), trials=trials, seed=seed)
    errs = [p.mean_abs_error for p in points]
    decreasing = all(a > b for a, b in zip(errs, errs[1:]))
    tight = errs[-1] < 2 * points[-1].mc_std_error
    relevant = min(p.truth for p in points) > min_truth
    curve = ", ".join(f"N={p.n}:{p.mean_abs_error:.4f}" for p in points)
    return decreasing and tight and relevant, f"f={target} truth={points[-1].truth:.4f}; {curve}"


def run_oracle_suite(quick: bool = False) -> List[CheckResult]:
    results = [
        _timed("mis_identity", lambda: check_mis_toys(50)),
        _timed("shared_normalizer", lambda: check_shared_normalizer(5 if quick else 20)),
        _timed("correction_factor", lambda: check_correction_factor(3 if quick else 10)),
        _timed("table_identities", lambda: check_table_identities(3 if quick else 10)),
        _timed("schedule_bounds", lambda: check_schedule_bounds(1_000 if quick else 10_000)),
    ]
    if not quick:
        results.append(_timed("convergence", check_convergence))
    return results
