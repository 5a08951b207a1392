"""Displacement-error metrics over aligned trajectory arrays."""

from __future__ import annotations

import numpy as np


def _check(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.ndim != 3 or pred.shape[-1] != 2 or pred.shape[0] == 0:
        raise ValueError("expected non-empty (n_scenes, n_steps, 2) arrays")
    return pred, truth


def ade(pred, truth) -> float:
    """Mean Euclidean distance over all scenes and time steps, in meters."""
    pred, truth = _check(pred, truth)
    return float(np.linalg.norm(pred - truth, axis=2).mean())


def fde(pred, truth) -> float:
    """Mean Euclidean distance at the final step only, in meters."""
    pred, truth = _check(pred, truth)
    return float(np.linalg.norm(pred[:, -1] - truth[:, -1], axis=1).mean())
