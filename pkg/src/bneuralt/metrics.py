"""Classification and regression scores."""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    pass


def _pair(pred, truth, min_len=1):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise MetricError(f"length mismatch: {pred.shape} vs {truth.shape}")
    if len(pred) < min_len:
        raise MetricError(f"need at least {min_len} values")
    return pred, truth


def error_rate(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.count_nonzero(pred != truth)) / len(pred)


def accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.count_nonzero(pred == truth)) / len(pred)


def mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    r = pred.astype(np.float64) - truth
    return float(np.mean(r * r))


def r2_fit(pred, truth) -> float:
    """Nash-Sutcliffe efficiency: 1 - SSE / SST."""
    pred, truth = _pair(pred, truth, min_len=2)
    truth = truth.astype(np.float64)
    sst = float(np.sum((truth - truth.mean()) ** 2))
    if sst == 0.0:
        raise MetricError("r2 is undefined for constant targets")
    sse = float(np.sum((truth - pred) ** 2))
    return 1.0 - sse / sst


def per_class_rates(pred, truth, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """One-vs-rest (tpr, fpr) per class.

    A rate whose denominator is empty (class absent from ``truth``, or every
    example belonging to it) is NaN.
    """
    pred, truth = _pair(pred, truth)
    if n_classes < 1:
        raise MetricError("n_classes must be positive")
    for arr in (pred, truth):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise MetricError(f"class indices must lie in [0, {n_classes})")
    tpr = np.full(n_classes, np.nan)
    fpr = np.full(n_classes, np.nan)
    for c in range(n_classes):
        pos = truth == c
        hit = pred == c
        if pos.any():
            tpr[c] = np.count_nonzero(hit & pos) / np.count_nonzero(pos)
        if (~pos).any():
            fpr[c] = np.count_nonzero(hit & ~pos) / np.count_nonzero(~pos)
    return tpr, fpr
