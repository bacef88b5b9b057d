"""Small input-validation helpers shared by the estimator layer."""

from __future__ import annotations

import numpy as np


def check_feature_array(arr) -> np.ndarray:
    """Validate a (bs, h, w, channels) feature-map batch."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"expected a 4-D (bs, h, w, channels) array, got ndim={arr.ndim}")
    if arr.shape[0] < 2:
        raise ValueError("batch size must be >= 2")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature maps must be finite")
    return arr


def check_design_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Validate matching 2-D design/response matrices."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("design and response must be 2-D")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row counts disagree: {x.shape[0]} vs {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("design and response must be finite")
    return x, y


def check_keep_flags(flags, n: int, name: str = "flags") -> np.ndarray:
    flags = np.asarray(flags, dtype=bool).reshape(-1)
    if flags.size != n:
        raise ValueError(f"{name} has length {flags.size}, expected {n}")
    return flags
