from __future__ import annotations
from pathlib import Path

from prometheus_client import CollectorRegistry, Counter, write_to_textfile

REGISTRY = CollectorRegistry()
ROUNDS_TOTAL = Counter("poolsearch_rounds_total", "Search rounds executed", ["method"], registry=REGISTRY)
CHILDREN_TOTAL = Counter("poolsearch_children_total", "Children generated (frozen pass-throughs excluded)", ["method"], registry=REGISTRY)
BACKTRACK_UNITS_TOTAL = Counter("poolsearch_backtrack_units_total", "Context units re-materialized for non-frontier parents", ["method"], registry=REGISTRY)
SCORER_CALLS_TOTAL = Counter("poolsearch_scorer_calls_total", "Prefix scoring calls", registry=REGISTRY)
HTTP_RETRIES_TOTAL = Counter("poolsearch_http_retries_total", "HTTP retries issued by the backend", ["endpoint"], registry=REGISTRY)
SEARCH_FAILURES_TOTAL = Counter("poolsearch_search_failures_total", "Problem instances aborted", ["method"], registry=REGISTRY)


def dump(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
    return path
