"""Gradient-free trainer: alternating Procrustes rotations of the end weights.

Each epoch runs two half-steps. The A->B half rotates the last weight so
the forward logits line up with the B-side targets; the B->A half rotates
the first weight so the backward logits line up with the A-side targets.
Rotations are orthogonal, so weights that start orthogonal stay orthogonal
to rounding error, no matter how many epochs run.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import BamModel, forward_ab, forward_ba, gram_deviation, _sign
from .patterns import PatternSet
from .procrustes import solve_rotation

GRAM_TOLERANCE = 1e-6  # precondition on the initial weights


@dataclass(frozen=True)
class SraConfig:
    epochs: int = 100
    stop_on_perfect_recall: bool = True
    rotate_inner_layers: bool = False
    allow_nonorthogonal: bool = False  # warn instead of raising on a bad init
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class SraHistory:
    """Per-epoch alignment gaps ||targets - logits||_F at both ends."""

    gap_b: list = field(default_factory=list)
    gap_a: list = field(default_factory=list)
    epochs_run: int = 0


def _perfect_recall(weights, pats: PatternSet) -> bool:
    """One-shot sign retrieval is exact in both directions."""
    model = BamModel(weights=tuple(weights))
    if not np.array_equal(_sign(forward_ab(model, pats.side_a).logits), pats.side_b):
        return False
    return np.array_equal(_sign(forward_ba(model, pats.side_b).logits), pats.side_a)


def train_bsra(pats: PatternSet, model: BamModel, cfg: SraConfig):
    """Train by bidirectional subspace rotation; returns (model, history)."""
    if model.n_a != pats.n_a or model.n_b != pats.n_b:
        raise ValueError(
            f"model dims ({model.n_a}, {model.n_b}) do not match "
            f"patterns ({pats.n_a}, {pats.n_b})"
        )
    worst = max(gram_deviation(w) for w in model.weights)
    if worst > GRAM_TOLERANCE:
        msg = f"initial weights are not orthogonal (Gram deviation {worst:.3g})"
        if cfg.allow_nonorthogonal:
            warnings.warn(msg)
        else:
            raise ValueError(msg)

    weights = [w.copy() for w in model.weights]
    m = len(weights)
    x, y = pats.side_a, pats.side_b
    gap_b, gap_a = [], []
    epochs_run = 0

    for _ in range(cfg.epochs):
        cur = BamModel(weights=tuple(weights))

        # A->B half-step: rotate the B-end weight onto the targets.
        fwd = forward_ab(cur, x)
        q = solve_rotation(y, fwd.logits).Q
        weights[-1] = q @ weights[-1]

        if cfg.rotate_inner_layers and m > 2:
            # Align each inner layer's backward hidden state with its
            # forward hidden state; one consistent deep extension.
            cur = BamModel(weights=tuple(weights))
            fwd = forward_ab(cur, x)
            bwd = forward_ba(cur, y)
            for k in range(1, m - 1):  # 0-based weight index, i.e. W_2..W_{M-1}
                h_k = fwd.post[k + 1]  # forward state H_{k+1}
                v_k = bwd.post[m - k - 1]  # backward state V_{k+1}
                q_k = solve_rotation(h_k, v_k).Q
                weights[k] = q_k @ weights[k]

        # B->A half-step: rotate the A-end weight onto the targets. The
        # backward pass applies W_1^T, so the left rotation lands on the right.
        cur = BamModel(weights=tuple(weights))
        bwd = forward_ba(cur, y)
        q = solve_rotation(x, bwd.logits).Q
        weights[0] = weights[0] @ q.T

        cur = BamModel(weights=tuple(weights))
        gap_b.append(float(np.linalg.norm(y - forward_ab(cur, x).logits)))
        gap_a.append(float(np.linalg.norm(x - forward_ba(cur, y).logits)))
        epochs_run += 1

        if cfg.stop_on_perfect_recall and _perfect_recall(weights, pats):
            break

    trained = BamModel(weights=tuple(weights), activation=model.activation)
    return trained, SraHistory(gap_b=gap_b, gap_a=gap_a, epochs_run=epochs_run)
