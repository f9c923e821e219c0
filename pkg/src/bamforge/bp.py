"""Regularized bidirectional backprop: reconstruction both ways, plus
orthogonality and gradient-pattern-alignment penalties, under full-batch Adam.

The total objective is built once as an autodiff graph; the alignment
penalty is a function of the input gradient of the reconstruction loss, so
its weight gradients flow through a second-order path in the same graph.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .core import BamModel, End
from .patterns import PatternSet

COSINE_EPS = 1e-12  # under the sqrt of each column norm


class Strategy(Enum):
    BP = "BP"
    ORTH = "ORTH"
    ALIGN = "ALIGN"
    SAME = "SAME"
    DIFF = "DIFF"


# (use orthogonality term, use alignment term, sign targets at ends A/B)
_STRATEGY_TERMS = {
    Strategy.BP: (False, False, (1.0, 1.0)),
    Strategy.ORTH: (True, False, (1.0, 1.0)),
    Strategy.ALIGN: (False, True, (1.0, 1.0)),
    Strategy.SAME: (True, True, (1.0, 1.0)),
    Strategy.DIFF: (True, True, (-1.0, 1.0)),
}


@dataclass(frozen=True)
class BpConfig:
    strategy: Strategy = Strategy.BP
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100
    lambda_ortho: float = 1e-3
    lambda_align: float = 1e-2
    gpa_stop_grad: bool = False  # treat the input gradient as a constant
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lambda_ortho < 0 or self.lambda_align < 0:
            raise ValueError("penalty coefficients must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    e_forward: float
    e_backward: float
    owm_a: float
    owm_b: float
    gpa_a: float  # mean cosines, measured every epoch regardless of strategy
    gpa_b: float
    total: float


def _forward_logits(w_nodes, x_node):
    h = x_node
    for k, w in enumerate(w_nodes):
        u = ad.matmul(w, h)
        if k < len(w_nodes) - 1:
            h = ad.tanh(u)
    return u


def _backward_logits(w_nodes, y_node):
    v = y_node
    for k in range(len(w_nodes) - 1, -1, -1):
        r = ad.matmul(ad.transpose(w_nodes[k]), v)
        if k > 0:
            v = ad.tanh(r)
    return r


def _gram_deviation_node(w_node):
    rows, cols = w_node.shape
    if rows <= cols:
        gram = ad.matmul(w_node, ad.transpose(w_node))
    else:
        gram = ad.matmul(ad.transpose(w_node), w_node)
    return ad.sum_squares(ad.sub(gram, ad.const(np.eye(gram.shape[0]))))


def _mean_column_cosine(g_node, x_node):
    """Mean over columns of cos(g[:, j], x[:, j]), as a 1x1 node."""
    n, p = g_node.shape
    row_ones = ad.const(np.ones((1, n)))
    eps_row = ad.const(np.full((1, p), COSINE_EPS))
    ip = ad.matmul(row_ones, ad.hadamard(g_node, x_node))
    n_g = ad.sqrt(ad.add(ad.matmul(row_ones, ad.hadamard(g_node, g_node)), eps_row))
    n_x = ad.sqrt(ad.add(ad.matmul(row_ones, ad.hadamard(x_node, x_node)), eps_row))
    cos = ad.div(ip, ad.hadamard(n_g, n_x))
    return ad.smul(1.0 / p, ad.matmul(cos, ad.const(np.ones((p, 1)))))


class LossGraph:
    """The full training objective, its metrics, and its weight gradients."""

    def __init__(self, layer_dims, pattern_count, cfg: BpConfig):
        m = len(layer_dims) - 1
        self.w_nodes = [
            ad.inp((layer_dims[k + 1], layer_dims[k]), name=f"W{k + 1}")
            for k in range(m)
        ]
        self.x_node = ad.inp((layer_dims[0], pattern_count), name="X")
        self.y_node = ad.inp((layer_dims[-1], pattern_count), name="Y")

        inv_p = 1.0 / pattern_count
        self.e_f = ad.smul(inv_p, ad.sum_squares(ad.sub(_forward_logits(self.w_nodes, self.x_node), self.y_node)))
        self.e_b = ad.smul(inv_p, ad.sum_squares(ad.sub(_backward_logits(self.w_nodes, self.y_node), self.x_node)))
        total = ad.add(self.e_f, self.e_b)

        # Inner layers contribute to whichever end they are nearer.
        split = math.ceil(m / 2)
        devs = [_gram_deviation_node(w) for w in self.w_nodes]
        self.owm_a = _sum_nodes(devs[:split])
        self.owm_b = (_sum_nodes(devs[split:]) if m > 1
                      else ad.const(np.zeros((1, 1))))

        self.grad_x = ad.gradient(self.e_f, [self.x_node])[0]
        self.grad_y = ad.gradient(self.e_b, [self.y_node])[0]
        self.stop_grad_inputs = None
        if cfg.gpa_stop_grad:
            gx_in = ad.inp(self.grad_x.shape, name="grad_x_stop")
            gy_in = ad.inp(self.grad_y.shape, name="grad_y_stop")
            self.stop_grad_inputs = (gx_in, gy_in)
            self.cos_a = _mean_column_cosine(gx_in, self.x_node)
            self.cos_b = _mean_column_cosine(gy_in, self.y_node)
        else:
            self.cos_a = _mean_column_cosine(self.grad_x, self.x_node)
            self.cos_b = _mean_column_cosine(self.grad_y, self.y_node)

        use_ortho, use_align, (ts_a, ts_b) = _STRATEGY_TERMS[cfg.strategy]
        one = ad.const(np.ones((1, 1)))
        if use_ortho and cfg.lambda_ortho > 0:
            total = ad.add(total, ad.smul(cfg.lambda_ortho, ad.add(self.owm_a, self.owm_b)))
        if use_align and cfg.lambda_align > 0:
            align = ad.add(
                ad.sub(one, ad.smul(ts_a, self.cos_a)),
                ad.sub(one, ad.smul(ts_b, self.cos_b)),
            )
            total = ad.add(total, ad.smul(cfg.lambda_align, align))
        self.total = total
        self.grads = ad.gradient(total, self.w_nodes)

    def bindings(self, weights, x, y):
        b = dict(zip(self.w_nodes, weights))
        b[self.x_node] = x
        b[self.y_node] = y
        if self.stop_grad_inputs is not None:
            gx, gy = ad.evaluate([self.grad_x, self.grad_y], b)
            b[self.stop_grad_inputs[0]] = gx
            b[self.stop_grad_inputs[1]] = gy
        return b


def _sum_nodes(nodes):
    out = nodes[0]
    for n in nodes[1:]:
        out = ad.add(out, n)
    return out


def reconstruction_losses(model: BamModel, pats: PatternSet):
    """Mean-per-pattern squared logit errors (forward, backward), in numpy."""
    from .core import forward_ab, forward_ba

    if model.n_a != pats.n_a or model.n_b != pats.n_b:
        raise ValueError("model dims do not match patterns")
    p = pats.count
    e_f = float(np.sum((forward_ab(model, pats.side_a).logits - pats.side_b) ** 2)) / p
    e_b = float(np.sum((forward_ba(model, pats.side_b).logits - pats.side_a) ** 2)) / p
    return e_f, e_b


def owm_penalty(model: BamModel, lambda_ortho: float = 1e-3):
    """Gram deviations split by end; contribution = lambda * (owm_a + owm_b)."""
    from .core import gram_deviation

    split = math.ceil(model.depth / 2)
    devs = [gram_deviation(w) for w in model.weights]
    owm_a = float(sum(devs[:split]))
    owm_b = float(sum(devs[split:])) if model.depth > 1 else 0.0
    return owm_a, owm_b, lambda_ortho * (owm_a + owm_b)


def gpa_cosine(model: BamModel, pats: PatternSet, end: End) -> float:
    """Mean per-column cosine between the input gradient and the patterns.

    End A uses the forward reconstruction loss differentiated w.r.t. the
    A-side inputs; end B mirrors with the backward loss.
    """
    graph = LossGraph(model.layer_dims, pats.count, BpConfig(strategy=Strategy.BP))
    b = graph.bindings(list(model.weights), pats.side_a, pats.side_b)
    node = graph.grad_x if end is End.A else graph.grad_y
    pattern = pats.side_a if end is End.A else pats.side_b
    g = ad.evaluate([node], b)[0]
    ip = np.sum(g * pattern, axis=0)
    norms = np.sqrt(np.sum(g * g, axis=0) + COSINE_EPS) * np.sqrt(np.sum(pattern * pattern, axis=0) + COSINE_EPS)
    return float(np.mean(ip / norms))


def gpa_penalty(model: BamModel, pats: PatternSet, end: End,
                target_sign: float = 1.0, lambda_align: float = 1e-2):
    """(mean cosine, loss contribution lambda * (1 - target_sign * cosine))."""
    cos = gpa_cosine(model, pats, end)
    return cos, lambda_align * (1.0 - target_sign * cos)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (new params, new state)."""
    if state is None:
        state = {"m": [np.zeros_like(p) for p in params],
                 "v": [np.zeros_like(p) for p in params],
                 "t": 0}
    t = state["t"] + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, {"m": new_m, "v": new_v, "t": t}


def train_bbp(pats: PatternSet, model: BamModel, cfg: BpConfig):
    """Full-batch Adam on the strategy objective; returns (model, history)."""
    if model.n_a != pats.n_a or model.n_b != pats.n_b:
        raise ValueError("model dims do not match patterns")
    graph = LossGraph(model.layer_dims, pats.count, cfg)
    metrics = [graph.total, graph.e_f, graph.e_b,
               graph.owm_a, graph.owm_b, graph.cos_a, graph.cos_b]
    weights = [w.copy() for w in model.weights]
    state = None
    history = []
    for epoch in range(cfg.epochs):
        b = graph.bindings(weights, pats.side_a, pats.side_b)
        values = ad.evaluate(graph.grads + metrics, b)
        grads, (total, e_f, e_b, owm_a, owm_b, cos_a, cos_b) = values[: model.depth], values[model.depth:]
        breakdown = LossBreakdown(
            e_forward=e_f.item(), e_backward=e_b.item(),
            owm_a=owm_a.item(), owm_b=owm_b.item(),
            gpa_a=cos_a.item(), gpa_b=cos_b.item(), total=total.item(),
        )
        if not math.isfinite(breakdown.total):
            bad = [name for name, v in vars(breakdown).items() if not math.isfinite(v)]
            raise ArithmeticError(
                f"non-finite loss at epoch {epoch} (terms: {', '.join(bad)})"
            )
        history.append(breakdown)
        weights, state = adam_step(weights, grads, state, cfg.lr,
                                   cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    trained = BamModel(weights=tuple(weights), activation=model.activation)
    return trained, history
