"""Reverse-mode differentiation over dense matrices, with gradients as graphs.

Nodes form an immutable DAG; `gradient` builds adjoint expressions out of
the same op set, so the result can be differentiated again. This closure
property is what makes second-order terms (a penalty that is a function of
an input gradient) differentiable with respect to the weights.

Shape rules are deliberately rigid: elementwise ops require equal shapes,
except that one operand of `hadamard`/`div` may be 1x1 (scalar broadcast).
"""

import numpy as np

EPS_NORM = 1e-12  # added under sqrt in norm() to stay differentiable at 0


class Node:
    """One op in the DAG. Do not mutate after construction."""

    __slots__ = ("op", "parents", "shape", "const_value", "scalar", "name")
    _counter = 0

    def __init__(self, op, parents=(), shape=None, const_value=None, scalar=None, name=None):
        self.op = op
        self.parents = tuple(parents)
        self.shape = shape
        self.const_value = const_value
        self.scalar = scalar
        self.name = name

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"<Node {self.op}{tag} {self.shape}>"


def inp(shape, name=None) -> Node:
    """A placeholder bound at evaluation time."""
    return Node("input", shape=tuple(shape), name=name)


def const(value) -> Node:
    value = np.atleast_2d(np.asarray(value, dtype=np.float64))
    return Node("const", shape=value.shape, const_value=value)


def _require(cond, node_desc, msg):
    if not cond:
        raise ValueError(f"{node_desc}: {msg}")


def matmul(a: Node, b: Node) -> Node:
    _require(a.shape[1] == b.shape[0], "matmul", f"inner dims {a.shape} @ {b.shape}")
    return Node("matmul", (a, b), shape=(a.shape[0], b.shape[1]))


def transpose(a: Node) -> Node:
    return Node("transpose", (a,), shape=(a.shape[1], a.shape[0]))


def add(a: Node, b: Node) -> Node:
    _require(a.shape == b.shape, "add", f"shapes {a.shape} vs {b.shape}")
    return Node("add", (a, b), shape=a.shape)


def sub(a: Node, b: Node) -> Node:
    _require(a.shape == b.shape, "sub", f"shapes {a.shape} vs {b.shape}")
    return Node("sub", (a, b), shape=a.shape)


def smul(c: float, a: Node) -> Node:
    return Node("smul", (a,), shape=a.shape, scalar=float(c))


def _broadcast_shape(a, b, opname):
    if a.shape == b.shape:
        return a.shape
    if b.shape == (1, 1):
        return a.shape
    if a.shape == (1, 1):
        return b.shape
    raise ValueError(f"{opname}: shapes {a.shape} vs {b.shape}")


def hadamard(a: Node, b: Node) -> Node:
    return Node("hadamard", (a, b), shape=_broadcast_shape(a, b, "hadamard"))


def div(a: Node, b: Node) -> Node:
    """Elementwise a / b; b may be 1x1."""
    _require(a.shape == b.shape or b.shape == (1, 1), "div", f"shapes {a.shape} vs {b.shape}")
    return Node("div", (a, b), shape=a.shape)


def tanh(a: Node) -> Node:
    return Node("tanh", (a,), shape=a.shape)


def sqrt(a: Node) -> Node:
    return Node("sqrt", (a,), shape=a.shape)


def sum_squares(a: Node) -> Node:
    return Node("sumsq", (a,), shape=(1, 1))


def dot(a: Node, b: Node) -> Node:
    _require(a.shape == b.shape, "dot", f"shapes {a.shape} vs {b.shape}")
    return Node("dot", (a, b), shape=(1, 1))


def norm(a: Node, eps: float = EPS_NORM) -> Node:
    """Frobenius norm, smoothed: sqrt(sum_squares(a) + eps)."""
    return sqrt(add(sum_squares(a), const(eps)))


def topo_order(roots):
    """Parents-before-children topological order, iterative DFS."""
    order, seen = [], set()
    stack = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
        else:
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
    return order


def evaluate(outputs, bindings) -> list:
    """Compute values for the given output nodes.

    bindings maps input Node -> ndarray; every reachable input must be bound.
    """
    values = {id(n): np.atleast_2d(np.asarray(v, dtype=np.float64)) for n, v in bindings.items()}
    for node in topo_order(outputs):
        if id(node) in values:
            continue
        if node.op == "const":
            values[id(node)] = node.const_value
            continue
        if node.op == "input":
            raise ValueError(f"unbound input node {node.name!r}")
        p = [values[id(q)] for q in node.parents]
        if node.op == "matmul":
            v = p[0] @ p[1]
        elif node.op == "transpose":
            v = p[0].T
        elif node.op == "add":
            v = p[0] + p[1]
        elif node.op == "sub":
            v = p[0] - p[1]
        elif node.op == "smul":
            v = node.scalar * p[0]
        elif node.op == "hadamard":
            v = p[0] * p[1]
        elif node.op == "div":
            v = p[0] / p[1]
        elif node.op == "tanh":
            v = np.tanh(p[0])
        elif node.op == "sqrt":
            v = np.sqrt(p[0])
        elif node.op == "sumsq":
            v = np.array([[np.sum(p[0] * p[0])]])
        elif node.op == "dot":
            v = np.array([[np.sum(p[0] * p[1])]])
        else:
            raise ValueError(f"unknown op {node.op}")
        if v.shape != node.shape:
            raise ValueError(f"{node}: computed shape {v.shape} != declared {node.shape}")
        values[id(node)] = v
    return [values[id(n)] for n in outputs]


def _accum(adjoints, node, contribution):
    prev = adjoints.get(id(node))
    adjoints[id(node)] = contribution if prev is None else add(prev, contribution)


def _reduce_to(g: Node, target: Node) -> Node:
    """Sum a broadcast adjoint back down to a 1x1 operand."""
    if target.shape == g.shape:
        return g
    return dot(g, const(np.ones(g.shape)))


def gradient(output: Node, wrt) -> list:
    """Adjoints of a scalar output with respect to `wrt`, as new graph nodes.

    The returned nodes reference the original graph, so they can be
    evaluated with the same bindings or differentiated again.
    """
    if output.shape != (1, 1):
        raise ValueError(f"gradient requires a scalar (1x1) output, got {output.shape}")
    adjoints = {id(output): const(np.ones((1, 1)))}
    node_by_id = {}
    for node in reversed(topo_order([output])):
        node_by_id[id(node)] = node
        g = adjoints.get(id(node))
        if g is None or node.op in ("input", "const"):
            continue
        a = node.parents[0]
        b = node.parents[1] if len(node.parents) > 1 else None
        if node.op == "matmul":
            _accum(adjoints, a, matmul(g, transpose(b)))
            _accum(adjoints, b, matmul(transpose(a), g))
        elif node.op == "transpose":
            _accum(adjoints, a, transpose(g))
        elif node.op == "add":
            _accum(adjoints, a, g)
            _accum(adjoints, b, g)
        elif node.op == "sub":
            _accum(adjoints, a, g)
            _accum(adjoints, b, smul(-1.0, g))
        elif node.op == "smul":
            _accum(adjoints, a, smul(node.scalar, g))
        elif node.op == "hadamard":
            _accum(adjoints, a, _reduce_to(hadamard(g, b), a))
            _accum(adjoints, b, _reduce_to(hadamard(g, a), b))
        elif node.op == "div":
            _accum(adjoints, a, div(g, b))
            db = div(hadamard(g, a), hadamard(b, b))
            _accum(adjoints, b, smul(-1.0, _reduce_to(db, b)))
        elif node.op == "tanh":
            one_minus_t2 = sub(const(np.ones(node.shape)), hadamard(node, node))
            _accum(adjoints, a, hadamard(g, one_minus_t2))
        elif node.op == "sqrt":
            _accum(adjoints, a, div(g, smul(2.0, node)))
        elif node.op == "sumsq":
            _accum(adjoints, a, smul(2.0, hadamard(a, g)))
        elif node.op == "dot":
            _accum(adjoints, a, hadamard(b, g))
            _accum(adjoints, b, hadamard(a, g))
        else:
            raise ValueError(f"no gradient rule for op {node.op}")
    out = []
    for w in wrt:
        gw = adjoints.get(id(w))
        out.append(gw if gw is not None else const(np.zeros(w.shape)))
    return out


def finite_diff_check(output: Node, wrt, bindings, step: float = 1e-6) -> float:
    """Max relative error of gradient() vs central finite differences.

    Relative to max(1, ||numeric grad||_inf) per variable, which keeps the
    metric stable when components vanish. Divisions near zero in the graph
    make finite differences themselves unreliable; callers own that guard.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    analytic = evaluate(gradient(output, wrt), bindings)
    clean = {k: np.atleast_2d(np.asarray(v, dtype=np.float64)) for k, v in bindings.items()}
    worst = 0.0
    for w, a_grad in zip(wrt, analytic):
        base = clean[w]
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            bumped = dict(clean)
            hi_m = base.copy()
            hi_m[idx] += step
            bumped[w] = hi_m
            hi = evaluate([output], bumped)[0][0, 0]
            lo_m = base.copy()
            lo_m[idx] -= step
            bumped[w] = lo_m
            lo = evaluate([output], bumped)[0][0, 0]
            numeric[idx] = (hi - lo) / (2.0 * step)
        scale = max(1.0, float(np.max(np.abs(numeric))))
        worst = max(worst, float(np.max(np.abs(a_grad - numeric))) / scale)
    return worst
