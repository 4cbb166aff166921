"""Minimal fully connected network with hand-written backprop.

Shared by the feedback encoder, the adaptive update network, and the
trainable segmenter head. ReLU between weight layers, linear output.
"""

from __future__ import annotations

import numpy as np


def init_mlp(sizes: list[int], seed: int, scale: float = 1.0) -> list[np.ndarray]:
    """He-style init. Returns [W1, b1, W2, b2, ...] with Wi (in, out)."""
    rng = np.random.default_rng(seed)
    params: list[np.ndarray] = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        params.append(rng.normal(0, scale * np.sqrt(2.0 / fan_in), (fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def n_layers(params: list[np.ndarray]) -> int:
    return len(params) // 2


def mlp_forward(params: list[np.ndarray], x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass; x is (in,) or (batch, in). Returns (output, cache)."""
    cache = []
    a = x
    L = n_layers(params)
    for i in range(L):
        W, b = params[2 * i], params[2 * i + 1]
        pre = a @ W + b
        cache.append((a, pre))
        a = np.maximum(pre, 0.0) if i < L - 1 else pre
    return a, cache


def mlp_backward(
    params: list[np.ndarray], cache: list, grad_out: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backprop. Returns (param gradients, gradient w.r.t. input)."""
    grads = [np.zeros_like(p) for p in params]
    L = n_layers(params)
    g = grad_out
    for i in reversed(range(L)):
        a, pre = cache[i]
        if i < L - 1:
            g = g * (pre > 0)
        W = params[2 * i]
        if a.ndim == 1:
            grads[2 * i] = np.outer(a, g)
            grads[2 * i + 1] = g
        else:
            grads[2 * i] = a.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
        g = g @ W.T
    return grads, g


def mlp_to_lists(params: list[np.ndarray]) -> list[list]:
    return [p.tolist() for p in params]


def mlp_from_lists(lists: list[list]) -> list[np.ndarray]:
    return [np.asarray(p, dtype=float) for p in lists]
