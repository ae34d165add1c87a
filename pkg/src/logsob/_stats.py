"""Weighted moment helpers shared by the semigroup and functional modules."""

from __future__ import annotations

import numpy as np

from .fields import PositivityError


def weighted_mean(w: np.ndarray, v: np.ndarray) -> float:
    return float(np.dot(w, v))


def weighted_variance(w: np.ndarray, v: np.ndarray) -> float:
    # Centered form; the raw E[v²] - E[v]² loses digits when the mean dominates.
    if v.size and np.ptp(v) == 0:
        return 0.0
    m = np.dot(w, v)
    return float(np.dot(w, (v - m) ** 2))


def weighted_entropy(w: np.ndarray, v: np.ndarray) -> float:
    """Self-normalized entropy ``∫ v log(v / ∫v)``."""
    if np.any(v <= 0):
        raise PositivityError(f"entropy needs strictly positive values, min is {np.min(v):g}")
    if v.size and np.ptp(v) == 0:
        return 0.0
    m = np.dot(w, v)
    return float(np.dot(w, v * np.log(v / m)))


def weighted_fisher(w: np.ndarray, v: np.ndarray, grad: np.ndarray) -> float:
    if np.any(v <= 0):
        raise PositivityError(f"Fisher information needs strictly positive values, min is {np.min(v):g}")
    return float(np.dot(w, np.sum(grad * grad, axis=-1) / v))


def weighted_dirichlet(w: np.ndarray, grad: np.ndarray) -> float:
    return float(np.dot(w, np.sum(grad * grad, axis=-1)))
