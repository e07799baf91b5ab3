"""Class-weighted cross-entropy and inverse-frequency sample weights."""
from __future__ import annotations

import numpy as np

EPS = 1e-12


def sample_weights(mu, beta=1.0):
    """``(1/mu_i) ** beta``; absent classes borrow the rarest present class's weight."""
    mu = np.asarray(mu, dtype=np.float64)
    present = mu > 0
    if not present.any():
        raise ValueError("no class has positive weight")
    safe = np.where(present, mu, mu[present].min())
    return (1.0 / safe) ** beta


def weighted_ce(probs, truth, weights=None):
    """Mean weighted cross-entropy and its gradient w.r.t. the softmax logits.

    ``probs`` is ``(..., K)`` with rows summing to 1, ``truth`` holds class
    indices with shape ``probs.shape[:-1]``.  The loss is
    ``-(1/N) * sum_x w[t(x)] * log p[x, t(x)]`` and the returned gradient
    ``w[t(x)] * (p_x - onehot(t(x))) / N``.
    """
    p = np.asarray(probs, dtype=np.float64)
    k = p.shape[-1]
    p2 = p.reshape(-1, k)
    t = np.asarray(truth).reshape(-1).astype(np.intp)
    if t.shape[0] != p2.shape[0]:
        raise ValueError("truth and probabilities disagree in pixel count")
    w = np.ones(k) if weights is None else np.asarray(weights, dtype=np.float64)
    n = t.shape[0]
    rows = np.arange(n)
    wt = w[t]
    loss = -np.sum(wt * np.log(np.maximum(p2[rows, t], EPS))) / n
    grad = p2.copy()
    grad[rows, t] -= 1.0
    grad *= (wt / n)[:, None]
    return float(loss), grad.reshape(p.shape)
