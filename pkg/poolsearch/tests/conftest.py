# poolsearch/tests/conftest.py
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

# keep the audit log out of the working tree; must run before poolsearch.config is imported
os.environ.setdefault("AUDIT_FILE", os.path.join(tempfile.mkdtemp(prefix="poolsearch-audit-"), "events.jsonl"))


@pytest.fixture
def early_stop_env():
    """b=2, D=3 where prefix (2, 0) answers correctly and stops, with its PRM pushed down."""
    from poolsearch.backends.synthetic import SyntheticTreeEnv

    probs = [np.full((1, 2), 0.5), np.array([[0.5, 0.5], [0.3, 0.7]]), np.full((4, 2), 0.5)]
    answers = [np.array([-1]), np.array([-1, -1]), np.array([0, -1, -1, -1]), np.array([1, 1, 0, 1, 2, 0, 1, 3])]
    noise = [np.zeros(1), np.array([0.2, 0.7]), np.array([0.5, 0.3, 0.9, 0.1]), np.linspace(0.1, 0.8, 8)]
    bias = [np.zeros(1), np.zeros(2), np.array([-0.6, 0.0, 0.0, 0.0]), np.zeros(8)]
    return SyntheticTreeEnv(2, 3, probs, answers, noise_weight=0.6, noise=noise, bias=bias)
