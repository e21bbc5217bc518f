from __future__ import annotations

import numpy as np

from mcae.numerics import DimensionError


class MetricError(ValueError):
    pass


def relative_errors(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-column ``||pred_i - truth_i||^2 / ||truth_i||^2``."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.ndim == 1:
        pred, truth = pred[:, None], truth[:, None]
    den = np.sum(truth * truth, axis=0)
    bad = np.flatnonzero(den == 0)
    if bad.size:
        raise MetricError(f"truth column {int(bad[0])} has zero norm")
    return np.sum((pred - truth) ** 2, axis=0) / den


def metric_rel(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(relative_errors(pred, truth)))


def metric_abs_pointwise(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Componentwise mean of ``|pred - truth|`` over samples (columns)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.ndim == 1:
        return np.abs(pred - truth)
    return np.mean(np.abs(pred - truth), axis=1)
