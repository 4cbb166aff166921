"""Run-length encoding for binary masks.

Row-major, alternating zero-run / one-run lengths, always starting with a
zero-run (possibly of length 0). The run lengths sum to H*W.
"""

from __future__ import annotations

import numpy as np


def encode(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask).reshape(-1).astype(np.uint8)
    if flat.size == 0:
        return []
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return [int(r) for r in runs]


def decode(runs: list[int], height: int, width: int) -> np.ndarray:
    total = sum(runs)
    if total != height * width:
        raise ValueError(f"run lengths sum to {total}, expected {height * width}")
    if any(r < 0 for r in runs):
        raise ValueError("negative run length")
    flat = np.zeros(height * width, dtype=np.uint8)
    pos = 0
    value = 0
    for r in runs:
        if value == 1:
            flat[pos : pos + r] = 1
        pos += r
        value ^= 1
    return flat.reshape(height, width)
