from __future__ import annotations
import json, threading, time
from pathlib import Path
from typing import Any, Dict

from .config import AUDIT_ENABLED, AUDIT_FILE as _AUDIT_FILE

AUDIT_FILE = Path(_AUDIT_FILE)
_LOCK = threading.Lock()

def write_event(kind: str, payload: Dict[str, Any] | None = None) -> None:
    """Best-effort JSONL audit; never crash a search."""
    if not AUDIT_ENABLED:
        return
    try:
        AUDIT_FILE.parent.mkdir(parents=True, exist_ok=True)
        rec = {"ts": time.time(), "kind": kind, "payload": payload or {}}
        line = json.dumps(rec, ensure_ascii=False, default=str) + "\n"
        with _LOCK, AUDIT_FILE.open("a", encoding="utf-8") as f:
            f.write(line)
    except Exception:
        pass
