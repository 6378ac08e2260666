from __future__ import annotations
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..audit import write_event
from ..engine.search import run_search
from ..errors import MissingMetrics
from ..metrics import dump as dump_metrics
from ..models import ExperimentConfig, MethodEntry, MethodSpec, MetricsRecord, SearchResult
from ..reporter.summary import render_summary
from ..store import read_jsonl, write_atomic, write_csv, write_jsonl
from .problems import Problem, load_problems
from .seeds import cell_seed

log = logging.getLogger(__name__)

RECORDS_CSV = "records.csv"
RECORDS_JSONL = "records.jsonl"
AGGREGATES_CSV = "aggregates.csv"
CURVES_CSV = "curves.csv"
SUMMARY_MD = "summary.md"
METRICS_PROM = "metrics.prom"

Cell = Tuple[str, MethodEntry, MethodSpec, int, int, Problem]


def to_record(label: str, seed: int, result: SearchResult) -> MetricsRecord:
    final = result.final
    return MetricsRecord(
        method=label,
        N=result.child_budget,
        seed=seed,
        problem_id=result.problem_id,
        correct=bool(result.correct),
        answer=final.answer if final else None,
        valid=bool(final and final.valid),
        new_generation_units=result.ledger.new_generation_units,
        generated_tokens=result.ledger.generated_tokens,
        backtrack_recompute_units=result.ledger.backtrack_recompute_units,
        scorer_calls=result.ledger.scorer_calls,
        wall_time_s=result.wall_time_s,
        rounds_run=result.rounds_run,
        pool_sizes=result.pool_sizes,
        failed=result.failed,
        error=result.error,
    )


def plan_cells(
    cfg: ExperimentConfig,
    problems: Sequence[Problem],
    methods: Optional[Iterable[str]] = None,
    n_values: Optional[Iterable[int]] = None,
    seeds: Optional[Iterable[int]] = None,
) -> List[Cell]:
    wanted = set(methods or [])
    ns = list(n_values or cfg.n_values)
    seed_list = list(seeds or cfg.seeds)
    cells: List[Cell] = []
    for entry in cfg.methods:
        for label, spec in entry.expand():
            if wanted and label not in wanted and entry.method.value not in wanted:
                continue
            for n in ns:
                for seed in seed_list:
                    for prob in problems:
                        cells.append((label, entry, spec, n, seed, prob))
    return cells


def run_cell(cfg: ExperimentConfig, cell: Cell) -> MetricsRecord:
    label, entry, spec, n, seed, prob = cell
    t0 = time.perf_counter()
    try:
        search_cfg = entry.search_config(spec, n, cfg.horizon, cell_seed(cfg.master_seed, label, n, seed, prob.id))
        backend = prob.make_backend()
        try:
            result = run_search(search_cfg, backend, prob.id)
        finally:
            close = getattr(backend, "close", None)
            if callable(close):
                close()
        rec = to_record(label, seed, result)
    except Exception as e:
        log.exception("cell %s N=%d seed=%d %s crashed", label, n, seed, prob.id)
        rec = MetricsRecord(method=label, N=n, seed=seed, problem_id=prob.id, failed=True,
                            error=f"{type(e).__name__}: {e}", wall_time_s=round(time.perf_counter() - t0, 6))
    kind = "cell_failed" if rec.failed else "cell_done"
    write_event(kind, {"method": label, "N": n, "seed": seed, "problem_id": prob.id,
                       "correct": rec.correct, "error": rec.error})
    return rec


def _sort_key(r: MetricsRecord):
    return (r.method, r.N, r.seed, r.problem_id)


# --------------------------------- tables -------------------------------------
def records_frame(records: Sequence[MetricsRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        row = r.model_dump()
        row["pool_sizes"] = ";".join(str(x) for x in r.pool_sizes)
        rows.append(row)
    cols = list(MetricsRecord.model_fields)
    return pd.DataFrame(rows, columns=cols)


def aggregate(records: Sequence[MetricsRecord]) -> pd.DataFrame:
    """Per (method, N): accuracy mean over records, std over per-seed means, compute totals."""
    df = records_frame(records)
    if df.empty:
        return pd.DataFrame(columns=[
            "method", "N", "records", "seeds", "accuracy_mean", "accuracy_std",
            "generation_units_mean", "generation_units_total", "backtrack_units_total",
            "scorer_calls_total", "generated_tokens_total", "failures",
        ])
    df["correct"] = df["correct"].astype(float)
    rows = []
    for (method, n), g in df.groupby(["method", "N"], sort=True):
        per_seed = g.groupby("seed")["correct"].mean()
        tokens = g["generated_tokens"].dropna()
        rows.append({
            "method": method,
            "N": int(n),
            "records": int(len(g)),
            "seeds": int(per_seed.size),
            "accuracy_mean": float(g["correct"].mean()),
            "accuracy_std": float(np.std(per_seed.to_numpy(), ddof=0)),
            "generation_units_mean": float(g["new_generation_units"].mean()),
            "generation_units_total": int(g["new_generation_units"].sum()),
            "backtrack_units_total": int(g["backtrack_recompute_units"].sum()),
            "scorer_calls_total": int(g["scorer_calls"].sum()),
            "generated_tokens_total": int(tokens.sum()) if len(tokens) else None,
            "failures": int(g["failed"].astype(bool).sum()),
        })
    return pd.DataFrame(rows)


def curves_frame(agg: pd.DataFrame) -> pd.DataFrame:
    """Accuracy vs mean compute per method, ordered by N."""
    out = agg[["method", "N", "generation_units_mean", "accuracy_mean", "accuracy_std"]].copy()
    out = out.rename(columns={"generation_units_mean": "mean_generation_units"})
    counts = agg["records"].replace(0, np.nan)
    out["mean_generated_tokens"] = agg["generated_tokens_total"].astype(float) / counts
    return out.sort_values(["method", "N"], kind="mergesort").reset_index(drop=True)


def load_records(out_dir: Path) -> List[MetricsRecord]:
    path = Path(out_dir) / RECORDS_JSONL
    if not path.exists():
        raise MissingMetrics(f"no {RECORDS_JSONL} in {out_dir}")
    records = [MetricsRecord.model_validate(r) for r in read_jsonl(path)]
    if not records:
        raise MissingMetrics(f"{path} is empty")
    return records


def emit_curves(out_dir: Path) -> Path:
    """Recompute aggregates from raw records and write the curve CSV."""
    records = load_records(out_dir)
    return write_csv(Path(out_dir) / CURVES_CSV, curves_frame(aggregate(records)))


# --------------------------------- sweep --------------------------------------
class ExperimentOutputs:
    def __init__(self, records: List[MetricsRecord], aggregates: pd.DataFrame, paths: Dict[str, Path]) -> None:
        self.records = records
        self.aggregates = aggregates
        self.paths = paths


def write_outputs(cfg: ExperimentConfig, records: List[MetricsRecord], out_dir: Path) -> ExperimentOutputs:
    out_dir = Path(out_dir)
    agg = aggregate(records)
    paths = {
        "records_csv": write_csv(out_dir / RECORDS_CSV, records_frame(records)),
        "records_jsonl": write_jsonl(out_dir / RECORDS_JSONL, records),
        "aggregates": write_csv(out_dir / AGGREGATES_CSV, agg),
    }
    paths["curves"] = emit_curves(out_dir)
    paths["summary"] = write_atomic(out_dir / SUMMARY_MD, render_summary(cfg.name, agg, records))
    paths["metrics"] = dump_metrics(out_dir / METRICS_PROM)
    return ExperimentOutputs(records, agg, paths)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Optional[Path] = None,
    *,
    methods: Optional[Iterable[str]] = None,
    n_values: Optional[Iterable[int]] = None,
    seeds: Optional[Iterable[int]] = None,
) -> ExperimentOutputs:
    out = Path(out_dir or cfg.output_dir)
    problems = load_problems(cfg.problems)
    cells = plan_cells(cfg, problems, methods, n_values, seeds)
    log.info("experiment %s: %d problems, %d cells, %d workers", cfg.name, len(problems), len(cells), cfg.workers)
    write_event("experiment_start", {"name": cfg.name, "cells": len(cells), "problems": len(problems)})

    t0 = time.perf_counter()
    if cfg.workers == 1:
        records = [run_cell(cfg, c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            records = list(ex.map(lambda c: run_cell(cfg, c), cells))
    records.sort(key=_sort_key)

    outputs = write_outputs(cfg, records, out)
    failures = sum(r.failed for r in records)
    write_event("experiment_end", {"name": cfg.name, "records": len(records), "failures": failures,
                                   "seconds": round(time.perf_counter() - t0, 3)})
    log.info("experiment %s: %d records (%d failed) -> %s", cfg.name, len(records), failures, out)
    return outputs
