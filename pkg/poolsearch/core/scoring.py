from __future__ import annotations
import math

import numpy as np

from ..config import R_MIN


def clamp_score(x: float, r_min: float = R_MIN) -> float:
    """Clamp a PRM score into [r_min, 1]; NaN maps to the floor."""
    x = float(x)
    if math.isnan(x):
        return r_min
    return min(1.0, max(r_min, x))


def clamp_scores(xs, r_min: float = R_MIN) -> np.ndarray:
    arr = np.asarray(xs, dtype=np.float64)
    return np.clip(np.nan_to_num(arr, nan=r_min), r_min, 1.0)
