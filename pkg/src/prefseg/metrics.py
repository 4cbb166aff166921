"""Overlap metric and iteration bookkeeping for efficiency analysis."""

from __future__ import annotations

import numpy as np


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|A.B| / (|A|+|B|); two empty masks agree perfectly (1.0)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    inter = int(np.logical_and(a, b).sum())
    total = int((a != 0).sum()) + int((b != 0).sum())
    if total == 0:
        return 1.0
    return 2.0 * inter / total


def iterations_to_target(
    dice_per_iteration: list[float],
    target: float,
    cap: int = 6,
    failure_value: float = 10.0,
) -> float:
    """First iteration (1-based) reaching the target Dice within the cap.

    Runs that never reach it inside the cap get the failure value.
    """
    if not 0.0 < target <= 1.0:
        raise ValueError("target must lie in (0, 1]")
    if len(dice_per_iteration) == 0:
        raise ValueError("empty trajectory")
    for i, d in enumerate(dice_per_iteration[:cap], start=1):
        if d >= target:
            return float(i)
    return float(failure_value)
