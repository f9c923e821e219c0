"""Orthogonal Procrustes solver: the best rotation aligning predictions to targets.

Given target T and prediction P (same shape, columns are samples), the
orthogonal matrix Q minimizing ||T - Q P||_F is Q = U V^T where
U S V^T = svd(T P^T).
"""

import numpy as np
from dataclasses import dataclass


@dataclass(frozen=True)
class RotationResult:
    """Solution of one Procrustes alignment."""

    Q: np.ndarray
    singular_values: np.ndarray
    objective_bound: float  # sum of singular values, the attained trace maximum


def solve_rotation(target: np.ndarray, pred: np.ndarray) -> RotationResult:
    """Find the orthogonal Q minimizing ||target - Q @ pred||_F.

    target, pred: d x P matrices of equal shape.
    """
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if target.shape != pred.shape:
        raise ValueError(f"shape mismatch: target {target.shape} vs pred {pred.shape}")
    if target.ndim != 2 or target.shape[0] < 1:
        raise ValueError("expected 2-D matrices with at least one row")
    if not (np.isfinite(target).all() and np.isfinite(pred).all()):
        raise FloatingPointError("non-finite entries in Procrustes input")

    m = target @ pred.T
    try:
        u, s, vt = np.linalg.svd(m)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"SVD failed to converge: {exc}") from exc
    q = u @ vt
    return RotationResult(Q=q, singular_values=s, objective_bound=float(s.sum()))


def alignment_gap(target: np.ndarray, pred: np.ndarray, Q: np.ndarray) -> float:
    """Frobenius distance ||target - Q @ pred||_F."""
    target = np.asarray(target, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if target.shape != pred.shape:
        raise ValueError(f"shape mismatch: target {target.shape} vs pred {pred.shape}")
    if Q.shape != (target.shape[0], target.shape[0]):
        raise ValueError(f"rotation shape {Q.shape} does not match row dim {target.shape[0]}")
    return float(np.linalg.norm(target - Q @ pred))
