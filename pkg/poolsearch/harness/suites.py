"""Fixed synthetic experiments: the accuracy-per-compute comparison on trap
problems and the greedy/subpool blocker sweep."""
from __future__ import annotations
import itertools
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel

from ..backends.synthetic import (
    BlockerParams, SyntheticBackend, SyntheticTreeEnv, TrapParams, make_blocker_env, make_trap_env,
)
from ..engine.search import SearchRun, initialize, run_round, run_search
from ..errors import ConstructionFailed
from ..models import Method, MethodSpec, SearchConfig
from ..oracle.table import OracleTable, enumerate_env
from .seeds import cell_seed

log = logging.getLogger(__name__)

DIRECTIONAL_METHODS = (Method.BEAM, Method.STANDARD_SMC, Method.SPS, Method.PB_SMC)
PERSISTENT = (Method.SPS, Method.PB_SMC)
FRONTIER = (Method.BEAM, Method.STANDARD_SMC)


def _search_config(method: Method, n: int, m: Optional[int], horizon: int, seed: int,
                   early_stop: bool = True) -> SearchConfig:
    spec = MethodSpec(method=method)
    return SearchConfig(child_budget=n, parent_budget=None if spec.particle else m,
                        horizon=horizon, rng_seed=seed, spec=spec, early_stop=early_stop)


# --------------------------------- directional --------------------------------
def directional_suite(
    problems: int = 200,
    master_seeds: Sequence[int] = (0, 1, 2, 3, 4),
    n: int = 8,
    m: int = 2,
    horizon: int = 10,
    methods: Sequence[Method] = DIRECTIONAL_METHODS,
    trap: Optional[TrapParams] = None,
) -> pd.DataFrame:
    """One row per (master_seed, method): mean accuracy and generation units."""
    base = trap or TrapParams()
    envs = [make_trap_env(base.model_copy(update={"env_seed": i})) for i in range(problems)]
    rows = []
    for ms in master_seeds:
        for method in methods:
            correct, units = 0, []
            for i, env in enumerate(envs):
                pid = f"trap-{i}"
                cfg = _search_config(method, n, m, horizon, cell_seed(ms, method.value, n, 0, pid))
                res = run_search(cfg, SyntheticBackend(env), pid)
                correct += bool(res.correct)
                units.append(res.ledger.new_generation_units)
            rows.append({
                "master_seed": ms,
                "method": method.value,
                "accuracy": correct / problems,
                "mean_generation_units": sum(units) / problems,
                "total_generation_units": sum(units),
            })
            log.info("directional seed=%d %s acc=%.3f units=%.1f", ms, method.value,
                     rows[-1]["accuracy"], rows[-1]["mean_generation_units"])
    return pd.DataFrame(rows)


def directional_holds(df: pd.DataFrame) -> Tuple[bool, List[str]]:
    """Every persistent method beats every frontier method on accuracy at no more
    total generation units, for each master seed."""
    problems: List[str] = []
    for ms, g in df.groupby("master_seed"):
        by = g.set_index("method")
        for p, f in itertools.product(PERSISTENT, FRONTIER):
            if p.value not in by.index or f.value not in by.index:
                continue
            a, b = by.loc[p.value], by.loc[f.value]
            if not a["accuracy"] > b["accuracy"]:
                problems.append(f"seed {ms}: {p.value} acc {a['accuracy']:.3f} <= {f.value} {b['accuracy']:.3f}")
            if not a["total_generation_units"] <= b["total_generation_units"]:
                problems.append(f"seed {ms}: {p.value} units {a['total_generation_units']} > {f.value} {b['total_generation_units']}")
    return not problems, problems


# --------------------------------- blocker sweep ------------------------------
class BlockerSweep(BaseModel):
    instances: int
    greedy_blocked_runs: int = 0
    greedy_violations: int = 0
    sps_recovered_instances: int = 0

    @property
    def sps_recovery_rate(self) -> float:
        return self.sps_recovered_instances / self.instances if self.instances else 0.0


def blocker_instances(count: int, params: Optional[BlockerParams] = None,
                      max_attempts: int = 1000) -> List[SyntheticTreeEnv]:
    base = params or BlockerParams(verify_M=2)
    envs: List[SyntheticTreeEnv] = []
    for env_seed in range(max_attempts):
        if len(envs) == count:
            break
        try:
            envs.append(make_blocker_env(base.model_copy(update={"env_seed": env_seed})))
        except ConstructionFailed as e:
            log.debug("blocker seed %d rejected: %s", env_seed, e)
    return envs


def blocking_round(table: OracleTable, rounds: List[List[Tuple[int, int]]],
                   pools: List[List[Tuple[int, int]]]) -> Optional[int]:
    """First round whose parents all have sigma = 0 while the pool they came from
    holds some prefix with sigma > 0."""
    sigma: Dict[Tuple[int, int], float] = {
        (int(d), int(n)): float(s) for d, n, s in zip(table.lengths, table.nodes, table.sigma)
    }
    for t, (parents, pool) in enumerate(zip(rounds, pools), start=1):
        if all(sigma[p] == 0 for p in parents) and any(sigma[z] > 0 for z in pool):
            return t
    return None


def _traced_run(cfg: SearchConfig, env: SyntheticTreeEnv):
    """Run a search and return (per-round parent nodes, per-round source pool nodes)."""
    run = SearchRun(cfg, SyntheticBackend(env), f"blocker-{env.env_seed}")
    initialize(run)
    parents, pools = [], []
    for t in range(1, cfg.horizon + 1):
        if run.done:
            break
        pools.append([(run.arena.depth(i), int(run.arena.handle(i))) for i in run.pool.ids.tolist()])
        run_round(run, t)
        parents.append([(run.arena.depth(p), int(run.arena.handle(p))) for p in run.trace[-1].parents])
    return parents, pools


def blocker_sweep(instances: int = 50, seeds: int = 20, rounds: int = 5, n: int = 8, m: int = 2,
                  params: Optional[BlockerParams] = None) -> BlockerSweep:
    envs = blocker_instances(instances, params)
    out = BlockerSweep(instances=len(envs))
    for env in envs:
        table = enumerate_env(env)
        flagged = env.flagged
        recovered = False
        for s in range(seeds):
            g_parents, g_pools = _traced_run(_search_config(Method.GREEDY, n, m, rounds, s, early_stop=False), env)
            t_block = blocking_round(table, g_parents, g_pools)
            if t_block is not None:
                out.greedy_blocked_runs += 1
                if any(flagged in ps for ps in g_parents[t_block:]):
                    out.greedy_violations += 1
            s_parents, _ = _traced_run(_search_config(Method.SPS, n, m, rounds, s, early_stop=False), env)
            recovered = recovered or any(flagged in ps for ps in s_parents)
        out.sps_recovered_instances += recovered
    log.info("blocker sweep: %d instances, greedy blocked %d runs with %d violations, SPS recovery %.2f",
             out.instances, out.greedy_blocked_runs, out.greedy_violations, out.sps_recovery_rate)
    return out
