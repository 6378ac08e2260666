from __future__ import annotations
import json
import os
import re
from pathlib import Path
from typing import Any, Union

from pydantic import ValidationError

from ..errors import ConfigError
from ..models import ExperimentConfig

_VAR = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
SECRET_SUFFIXES = ("token", "api_key", "secret")


def _interpolate(node: Any, key: str = "") -> Any:
    """Replace ${VAR} from the environment, only inside secret-named string fields."""
    if isinstance(node, dict):
        return {k: _interpolate(v, str(k)) for k, v in node.items()}
    if isinstance(node, list):
        return [_interpolate(v, key) for v in node]
    if not isinstance(node, str) or not _VAR.search(node):
        return node
    if not key.lower().endswith(SECRET_SUFFIXES):
        raise ConfigError(f"field '{key}': ${{...}} is only allowed in secret fields ({', '.join(SECRET_SUFFIXES)})")

    def sub(m: re.Match) -> str:
        val = os.getenv(m.group(1))
        if val is None:
            raise ConfigError(f"field '{key}': environment variable {m.group(1)} is not set")
        return val
    return _VAR.sub(sub, node)


def parse_experiment(doc: Union[str, dict]) -> ExperimentConfig:
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return ExperimentConfig.model_validate(_interpolate(doc))
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_experiment(p.read_text(encoding="utf-8"))
