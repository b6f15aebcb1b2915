"""Pure-numpy fallback for the hot inference kernel."""

from __future__ import annotations

import numpy as np


def dueling_forward_batch(trunk_w, trunk_b, value_w, value_b, adv_w, adv_b,
                          obs: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Batched dueling-head forward pass.

    `obs` is (B, obs_dim); `mask` is (B, K) bool or None (all valid).  Hidden
    layers and the trunk output are ReLU; stream outputs are linear.  Q is
    V + (A - mean of A over the valid slots); invalid slots come back -inf.
    """
    h = obs
    for w, b in zip(trunk_w, trunk_b):
        h = np.maximum(h @ w.T + b, 0.0)
    v = h
    for i, (w, b) in enumerate(zip(value_w, value_b)):
        v = v @ w.T + b
        if i < len(value_w) - 1:
            np.maximum(v, 0.0, out=v)
    a = h
    for i, (w, b) in enumerate(zip(adv_w, adv_b)):
        a = a @ w.T + b
        if i < len(adv_w) - 1:
            np.maximum(a, 0.0, out=a)
    if mask is None:
        mean_a = a.mean(axis=1, keepdims=True)
        return v + a - mean_a
    mask = np.asarray(mask, dtype=bool)
    n_valid = mask.sum(axis=1, keepdims=True)
    safe = np.maximum(n_valid, 1)
    mean_a = np.where(mask, a, 0.0).sum(axis=1, keepdims=True) / safe
    q = v + a - mean_a
    q[~mask] = -np.inf
    q[np.squeeze(n_valid == 0, axis=1)] = -np.inf
    return q
