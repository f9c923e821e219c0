"""Adversarial and noisy input generation against a trained model.

Gradient attacks maximize the logit-space reconstruction error toward the
true partner pattern; the gradient is taken through the autodiff graph.
Perturbed inputs are never clipped to [-1, 1] (only to the epsilon ball,
where the attack defines one). sign(0) := 0 here, unlike retrieval.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .bp import _backward_logits, _forward_logits
from .core import BamModel


class AttackKind(Enum):
    GN = "GN"
    FGSM = "FGSM"
    FFGSM = "FFGSM"
    BIM = "BIM"
    PGD = "PGD"


class Direction(Enum):
    A_TO_B = "AtoB"
    B_TO_A = "BtoA"


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind
    epsilon: float = 0.0
    alpha: float = 0.0
    iterations: int = 1
    variance: float = 1.0  # GN only
    seed: int = 0
    direction: Direction = Direction.A_TO_B

    def __post_init__(self):
        if self.epsilon < 0 or self.alpha < 0 or self.variance < 0:
            raise ValueError("epsilon, alpha, and variance must be >= 0")
        if self.kind in (AttackKind.BIM, AttackKind.PGD) and self.iterations < 1:
            raise ValueError("iterative attacks need iterations >= 1")


class _LossGradient:
    """Gradient of ||far-end logits - target||^2 w.r.t. the attacked inputs."""

    def __init__(self, model: BamModel, direction: Direction, pattern_count: int):
        dims = model.layer_dims
        self.weights = list(model.weights)
        self.w_nodes = [ad.inp(w.shape) for w in self.weights]
        if direction is Direction.A_TO_B:
            self.x_node = ad.inp((dims[0], pattern_count))
            self.t_node = ad.inp((dims[-1], pattern_count))
            logits = _forward_logits(self.w_nodes, self.x_node)
        else:
            self.x_node = ad.inp((dims[-1], pattern_count))
            self.t_node = ad.inp((dims[0], pattern_count))
            logits = _backward_logits(self.w_nodes, self.x_node)
        loss = ad.sum_squares(ad.sub(logits, self.t_node))
        self.grad_node = ad.gradient(loss, [self.x_node])[0]

    def __call__(self, x: np.ndarray, target: np.ndarray) -> np.ndarray:
        b = dict(zip(self.w_nodes, self.weights))
        b[self.x_node] = x
        b[self.t_node] = target
        return ad.evaluate([self.grad_node], b)[0]


def _as_2d(x):
    x = np.asarray(x, dtype=np.float64)
    return (x.reshape(-1, 1), True) if x.ndim == 1 else (x, False)


def _project(x_adv, x, epsilon):
    out = x + np.clip(x_adv - x, -epsilon, epsilon)
    # rounding in the addition can overshoot the ball by an ulp; nudge back
    while True:
        over = np.abs(out - x) > epsilon
        if not over.any():
            return out
        out = np.where(over, np.nextafter(out, x), out)


def gn(x: np.ndarray, spec: AttackSpec) -> np.ndarray:
    """Additive zero-mean Gaussian noise, deterministic per seed."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    return x + rng.normal(0.0, np.sqrt(spec.variance), size=x.shape)


def fgsm(model: BamModel, x, y_target, spec: AttackSpec) -> np.ndarray:
    """One signed-gradient step of size epsilon."""
    x, squeeze = _as_2d(x)
    y_target = np.asarray(y_target, dtype=np.float64).reshape(y_target.shape[0], -1)
    grad_fn = _LossGradient(model, spec.direction, x.shape[1])
    x_adv = x + spec.epsilon * np.sign(grad_fn(x, y_target))
    return x_adv.reshape(-1) if squeeze else x_adv


def ffgsm(model: BamModel, x, y_target, spec: AttackSpec) -> np.ndarray:
    """Uniform(-alpha, alpha) init, one epsilon step, epsilon-ball projection."""
    x, squeeze = _as_2d(x)
    y_target = np.asarray(y_target, dtype=np.float64).reshape(y_target.shape[0], -1)
    rng = np.random.default_rng(spec.seed)
    x0 = x + rng.uniform(-spec.alpha, spec.alpha, size=x.shape)
    grad_fn = _LossGradient(model, spec.direction, x.shape[1])
    x_adv = _project(x0 + spec.epsilon * np.sign(grad_fn(x0, y_target)), x, spec.epsilon)
    return x_adv.reshape(-1) if squeeze else x_adv


def bim(model: BamModel, x, y_target, spec: AttackSpec) -> np.ndarray:
    """Iterated alpha-sized steps, projected to the epsilon ball each step."""
    x, squeeze = _as_2d(x)
    y_target = np.asarray(y_target, dtype=np.float64).reshape(y_target.shape[0], -1)
    grad_fn = _LossGradient(model, spec.direction, x.shape[1])
    x_adv = x
    for _ in range(spec.iterations):
        x_adv = _project(x_adv + spec.alpha * np.sign(grad_fn(x_adv, y_target)), x, spec.epsilon)
    return x_adv.reshape(-1) if squeeze else x_adv


def pgd(model: BamModel, x, y_target, spec: AttackSpec) -> np.ndarray:
    """BIM with Uniform(-epsilon, epsilon) random start."""
    x, squeeze = _as_2d(x)
    y_target = np.asarray(y_target, dtype=np.float64).reshape(y_target.shape[0], -1)
    rng = np.random.default_rng(spec.seed)
    grad_fn = _LossGradient(model, spec.direction, x.shape[1])
    x_adv = x + rng.uniform(-spec.epsilon, spec.epsilon, size=x.shape)
    for _ in range(spec.iterations):
        x_adv = _project(x_adv + spec.alpha * np.sign(grad_fn(x_adv, y_target)), x, spec.epsilon)
    return x_adv.reshape(-1) if squeeze else x_adv


def apply_attack(model: BamModel, x, y_target, spec: AttackSpec) -> np.ndarray:
    """Dispatch on spec.kind; x holds the attacked-end inputs as columns."""
    if spec.kind is AttackKind.GN:
        return gn(x, spec)
    if spec.kind is AttackKind.FGSM:
        return fgsm(model, x, y_target, spec)
    if spec.kind is AttackKind.FFGSM:
        return ffgsm(model, x, y_target, spec)
    if spec.kind is AttackKind.BIM:
        return bim(model, x, y_target, spec)
    return pgd(model, x, y_target, spec)
