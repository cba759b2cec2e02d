"""Softmax prediction and cross-entropy with analytic gradient."""

from __future__ import annotations

import numpy as np


def softmax_predict(logits: np.ndarray) -> np.ndarray:
    """Class distribution from logits, max-subtracted for stability.

    Accepts a single (C,) vector or a (N, C) batch; sums to 1 along the
    class axis and is invariant to adding a constant to all logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise ValueError("logits must be finite")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_from_logits(logits: np.ndarray, labels: np.ndarray
                              ) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over a (N, C) batch and its gradient w.r.t. logits.

    Uses the log-sum-exp form, so a uniform prediction scores exactly
    log(C).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    n, c = logits.shape
    shift = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - shift).sum(axis=1)) + shift[:, 0]
    losses = lse - logits[np.arange(n), labels]
    probs = softmax_predict(logits)
    probs[np.arange(n), labels] -= 1.0
    return float(losses.mean()), probs / n
