from __future__ import annotations
import json
from pathlib import Path
from typing import Any, Iterable, List

import numpy as np
import pandas as pd


def _json_default(o: Any) -> Any:
    if hasattr(o, "model_dump"):
        return o.model_dump()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, set):
        return sorted(o)
    raise TypeError(f"Object of type {o.__class__.__name__} is not JSON serializable")


def write_atomic(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path


def dumps(obj: Any, **kw) -> str:
    return json.dumps(obj, ensure_ascii=False, default=_json_default, **kw)


def write_jsonl(path: Path, rows: Iterable[Any]) -> Path:
    return write_atomic(path, "".join(dumps(r) + "\n" for r in rows))


def read_jsonl(path: Path) -> List[Any]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(x) for x in lines if x.strip()]


def write_csv(path: Path, df: pd.DataFrame) -> Path:
    return write_atomic(path, df.to_csv(index=False))
