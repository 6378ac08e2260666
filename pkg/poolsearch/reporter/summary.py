from __future__ import annotations
from datetime import datetime, timezone
from typing import Any, List, Sequence

import pandas as pd

from ..models import MetricsRecord


def _fmt_float(x: Any, nd: int = 3) -> str:
    try:
        if pd.isna(x):
            return "-"
        return f"{float(x):.{nd}f}"
    except Exception:
        return "-"


def _render_table(agg: pd.DataFrame) -> List[str]:
    lines = ["## Accuracy vs compute", ""]
    if agg.empty:
        lines.append("- No records.")
        return lines
    lines += [
        "| method | N | acc | ± std | gen units (mean) | backtrack units | scorer calls | tokens | failed |",
        "|---|---:|---:|---:|---:|---:|---:|---:|---:|",
    ]
    for r in agg.itertuples(index=False):
        lines.append(
            f"| {r.method} | {r.N} | {_fmt_float(r.accuracy_mean, 4)} | {_fmt_float(r.accuracy_std, 4)} "
            f"| {_fmt_float(r.generation_units_mean, 1)} | {r.backtrack_units_total} | {r.scorer_calls_total} "
            f"| {r.generated_tokens_total if pd.notna(r.generated_tokens_total) else '-'} | {r.failures} |"
        )
    return lines


def _render_failures(records: Sequence[MetricsRecord], limit: int = 20) -> List[str]:
    failed = [r for r in records if r.failed]
    if not failed:
        return []
    lines = ["", "## Failures", ""]
    for r in failed[:limit]:
        lines.append(f"- {r.method} N={r.N} seed={r.seed} {r.problem_id}: {r.error or 'unknown error'}")
    if len(failed) > limit:
        lines.append(f"- ... {len(failed) - limit} more")
    return lines


def render_summary(name: str, agg: pd.DataFrame, records: Sequence[MetricsRecord]) -> str:
    """Markdown report of one sweep. Synthetic runs report generation units, HTTP runs tokens."""
    when = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M UTC")
    lines = [f"# Experiment: {name}", "", f"- Generated: {when}", f"- Records: {len(records)}", ""]
    lines += _render_table(agg)
    lines += _render_failures(records)
    return "\n".join(lines) + "\n"
