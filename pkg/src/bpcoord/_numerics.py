"""Small numeric helpers shared by the solver engines."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def log_sum_exp(a: np.ndarray, axis=None):
    """Lean log-sum-exp; tolerates -inf entries (empty mass stays -inf)."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m_safe), axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return out.item()
    return np.squeeze(out, axis=axis)


@lru_cache(maxsize=None)
def hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and probability log-weights for one dimension."""
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    log_w = np.log(weights) - 0.5 * np.log(np.pi)
    nodes.setflags(write=False)
    log_w.setflags(write=False)
    return nodes, log_w


@lru_cache(maxsize=None)
def hermite_grid(order: int, dims: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensorized rule: points (order**dims, dims) and summed log-weights."""
    nodes, log_w = hermite_rule(order)
    if dims == 1:
        points = nodes[:, None].copy()
        total = log_w.copy()
    else:
        grids = np.meshgrid(*([nodes] * dims), indexing="ij")
        points = np.stack([g.ravel() for g in grids], axis=-1)
        wgrids = np.meshgrid(*([log_w] * dims), indexing="ij")
        total = sum(g.ravel() for g in wgrids)
    points.setflags(write=False)
    total.setflags(write=False)
    return points, total
