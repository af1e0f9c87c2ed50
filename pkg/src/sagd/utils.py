"""Small shared helpers: vector norms in the three supported flavors."""

from __future__ import annotations

import numpy as np

NORMS = ("l2", "linf", "l1")


def vector_norm(x: np.ndarray, kind: str = "l2") -> float:
    """Norm of a single vector."""
    if kind == "l2":
        return float(np.sqrt(np.sum(x * x)))
    if kind == "linf":
        return float(np.max(np.abs(x)))
    if kind == "l1":
        return float(np.sum(np.abs(x)))
    raise ValueError(f"unknown norm kind: {kind!r}")


def batch_norm(X: np.ndarray, kind: str = "l2") -> np.ndarray:
    """Row-wise norms of a (m, d) array, returned as shape (m,)."""
    if kind == "l2":
        return np.sqrt(np.sum(X * X, axis=-1))
    if kind == "linf":
        return np.max(np.abs(X), axis=-1)
    if kind == "l1":
        return np.sum(np.abs(X), axis=-1)
    raise ValueError(f"unknown norm kind: {kind!r}")
