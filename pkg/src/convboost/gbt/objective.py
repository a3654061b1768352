"""Multiclass softmax log-loss: probabilities, gradients and hessians."""

from __future__ import annotations

import numpy as np

from ..errors import LabelError, ShapeError


def softmax_rows(raw: np.ndarray) -> np.ndarray:
    z = raw - raw.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(raw: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    raw = np.asarray(raw, dtype=np.float64)
    labels = np.asarray(labels)
    if raw.ndim != 2 or raw.shape[1] < 2:
        raise ShapeError(f"raw scores must be [N, C] with C >= 2, got {raw.shape}")
    if labels.shape != (raw.shape[0],):
        raise ShapeError("need one label per row of raw scores")
    if labels.size and (labels.min() < 0 or labels.max() >= raw.shape[1]):
        raise LabelError(f"labels must lie in [0, {raw.shape[1]})")
    return raw, labels.astype(np.int64)


def softmax_grad_hess(raw_scores, label):
    """Per-class gradient and hessian of ``-log softmax(raw)[label]``.

    ``g_c = p_c - [c == label]`` and ``h_c = p_c (1 - p_c)``. Accepts a
    single score vector with an integer label, or ``[N, C]`` scores with a
    label vector; returns ``(g, h)`` shaped like ``raw_scores``.
    """
    single = np.ndim(raw_scores) == 1
    raw = np.atleast_2d(raw_scores)
    labels = np.atleast_1d(label)
    raw, labels = _check_labels(raw, labels)
    p = softmax_rows(raw)
    g = p.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    h = p * (1.0 - p)
    if single:
        return g[0], h[0]
    return g, h


def log_loss(raw: np.ndarray, labels: np.ndarray) -> float:
    """Mean multiclass log-loss computed stably from raw scores."""
    raw, labels = _check_labels(raw, labels)
    m = raw.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(raw - m).sum(axis=1, keepdims=True)))[:, 0]
    return float(np.mean(lse - raw[np.arange(len(labels)), labels]))
