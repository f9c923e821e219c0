"""The BAM model: bidirectional passes, iterative retrieval, energy, persistence.

A model is an ordered chain of weight matrices W_1..W_M with tanh between
layers. The A end feeds W_1; the B end sits after W_M. The forward (A->B)
pass applies each W_k, the backward (B->A) pass applies each W_k^T. Both
passes expose pre-activation logits, which downstream losses and the
rotation trainer operate on.
"""

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .patterns import FormatError, PatternSet

WEIGHT_MAGIC = b"BAMW"
WEIGHT_VERSION = 1


class Activation(Enum):
    TANH = 0


@dataclass(frozen=True)
class BamModel:
    """Weight chain W_1..W_M; W_k has shape d_k x d_{k-1}."""

    weights: tuple
    activation: Activation = Activation.TANH

    def __post_init__(self):
        if len(self.weights) < 1:
            raise ValueError("at least one weight matrix required")
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=np.float64) for w in self.weights))
        for k, w in enumerate(self.weights):
            if w.ndim != 2:
                raise ValueError(f"W_{k + 1} is not a matrix")
            if not np.isfinite(w).all():
                raise ValueError(f"W_{k + 1} has non-finite entries")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(
                    f"shape chain broken at W_{k + 1}: cols {w.shape[1]} "
                    f"!= previous rows {self.weights[k - 1].shape[0]}"
                )

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_a(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_b(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def depth(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class PassTrace:
    """Pre- and post-activation states of one directional pass.

    Forward: pre = [U_1..U_M], post = [H_0..H_M] (H_0 is the input).
    Backward: pre = [R_{M-1}..R_0], post = [V_M..V_0] (V_M is the input).
    """

    pre: tuple
    post: tuple

    @property
    def logits(self) -> np.ndarray:
        """The far-end pre-activation output (U_M forward, R_0 backward)."""
        return self.pre[-1]

    @property
    def output(self) -> np.ndarray:
        """The far-end post-activation output."""
        return self.post[-1]


def init_orthogonal(layer_dims, seed: int) -> BamModel:
    """Orthogonal (or semi-orthogonal) initialization of every weight matrix.

    Each W_k is the sign-corrected Q factor of a QR decomposition of a
    standard-normal matrix, so the Gram matrix on the short side is the
    identity. Deterministic per seed.
    """
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise ValueError("layer_dims must list at least two positive dimensions")
    rng = np.random.default_rng(seed)
    weights = []
    for d_out, d_in in zip(layer_dims[1:], layer_dims[:-1]):
        g = rng.standard_normal((max(d_out, d_in), min(d_out, d_in)))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))  # unique Q: positive R diagonal
        weights.append(q if d_out >= d_in else q.T)
    return BamModel(weights=tuple(weights))


def _as_columns(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def forward_ab(model: BamModel, x: np.ndarray) -> PassTrace:
    """A->B pass: U_k = W_k H_{k-1}, H_k = tanh(U_k). B-end logits are U_M."""
    x = _as_columns(x)
    if x.shape[0] != model.n_a:
        raise ValueError(f"input rows {x.shape[0]} != n_A {model.n_a}")
    pre, post = [], [x]
    h = x
    for w in model.weights:
        u = w @ h
        pre.append(u)
        h = np.tanh(u)
        post.append(h)
    return PassTrace(pre=tuple(pre), post=tuple(post))


def forward_ba(model: BamModel, y: np.ndarray) -> PassTrace:
    """B->A pass: R_{k-1} = W_k^T V_k, V_{k-1} = tanh(R_{k-1}). A-end logits are R_0."""
    y = _as_columns(y)
    if y.shape[0] != model.n_b:
        raise ValueError(f"input rows {y.shape[0]} != n_B {model.n_b}")
    pre, post = [], [y]
    v = y
    for w in reversed(model.weights):
        r = w.T @ v
        pre.append(r)
        v = np.tanh(r)
        post.append(v)
    return PassTrace(pre=tuple(pre), post=tuple(post))


def _sign(x: np.ndarray) -> np.ndarray:
    """Retrieval sign with sign(0) := +1."""
    return np.where(x >= 0.0, 1.0, -1.0)


class End(Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class RetrieveResult:
    pattern: np.ndarray
    trajectory: tuple
    iterations_used: int
    energies: tuple = field(default=())


def retrieve(model: BamModel, x0: np.ndarray, start_end: End = End.A,
             max_iters: int = 10) -> RetrieveResult:
    """Iterative bidirectional retrieval with sign discretization at the ends.

    Each round trip maps the current near-end state to the far end and back.
    Stops when the state pair repeats (fixed point) or max_iters round trips
    elapse. Returns the far-end bipolar pattern from the final round. Energy
    per round trip is recorded for monitoring; no monotonicity is asserted.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1, 1)
    go, back = (forward_ab, forward_ba) if start_end is End.A else (forward_ba, forward_ab)

    x = x0
    trajectory, energies = [], []
    far, prev_pair = None, None
    iterations = 0
    for _ in range(max_iters):
        t_go = go(model, x)
        far = _sign(t_go.logits)
        t_back = back(model, far)
        x_next = _sign(t_back.logits)
        trajectory.extend([far, x_next])
        iterations += 1
        if start_end is End.A:
            energies.append(float(energy(model, t_go, forward_ba(model, far))[0]))
        else:
            energies.append(float(energy(model, forward_ab(model, far), t_go)[0]))
        if np.array_equal(x_next, x):
            break
        if prev_pair is not None and np.array_equal(far, prev_pair[0]) \
                and np.array_equal(x_next, prev_pair[1]):
            break
        prev_pair = (far, x_next)
        x = x_next
    return RetrieveResult(pattern=far.reshape(-1), trajectory=tuple(trajectory),
                          iterations_used=iterations, energies=tuple(energies))


def energy(model: BamModel, fwd: PassTrace, bwd: PassTrace) -> np.ndarray:
    """Per-column energy -1/2 sum_k V_k^T W_k H_{k-1} from paired traces."""
    m = model.depth
    if fwd.post[0].shape[1] != bwd.post[0].shape[1]:
        raise ValueError("traces have different column counts")
    total = np.zeros(fwd.post[0].shape[1])
    # bwd.post is [V_M..V_0]; V_k sits at index M-k. fwd.pre[k-1] = W_k H_{k-1}.
    for k in range(1, m + 1):
        v_k = bwd.post[m - k]
        u_k = fwd.pre[k - 1]
        if v_k.shape != u_k.shape:
            raise ValueError(f"trace shape mismatch at layer {k}")
        total += np.sum(v_k * u_k, axis=0)
    return -0.5 * total


def hebbian_classic(pats: PatternSet) -> np.ndarray:
    """Classic single-matrix BAM weights W = side_b @ side_a^T.

    Used as an oracle in property tests: retrieval y <- sign(Wx),
    x <- sign(W^T y), with energy E = -y^T W x.
    """
    return pats.side_b @ pats.side_a.T


def hebbian_energy(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    return float(-y @ w @ x)


def save_model(model: BamModel, path: str) -> None:
    """Write the weight chain in the fixed little-endian binary format."""
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(struct.pack("<II", WEIGHT_VERSION, model.depth))
        for w in model.weights:
            fh.write(struct.pack("<II", w.shape[0], w.shape[1]))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        fh.write(struct.pack("<B", model.activation.value))


def load_model(path: str) -> BamModel:
    """Read a model written by save_model; round-trips bit-exactly."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != WEIGHT_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    version, m = struct.unpack("<II", data[4:12])
    if version != WEIGHT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 12
    weights = []
    for _ in range(m):
        if offset + 8 > len(data):
            raise FormatError(f"{path}: truncated matrix header")
        rows, cols = struct.unpack("<II", data[offset : offset + 8])
        offset += 8
        nbytes = rows * cols * 8
        if offset + nbytes > len(data):
            raise FormatError(f"{path}: truncated matrix payload")
        weights.append(np.frombuffer(data[offset : offset + nbytes], dtype="<f8").reshape(rows, cols))
        offset += nbytes
    if offset + 1 > len(data):
        raise FormatError(f"{path}: missing activation tag")
    tag = data[offset]
    try:
        activation = Activation(tag)
    except ValueError as exc:
        raise FormatError(f"{path}: unknown activation tag {tag}") from exc
    try:
        return BamModel(weights=tuple(weights), activation=activation)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def gram_deviation(w: np.ndarray) -> float:
    """||G - I||_F^2 with G = W W^T if rows <= cols else W^T W."""
    g = w @ w.T if w.shape[0] <= w.shape[1] else w.T @ w
    return float(np.sum((g - np.eye(g.shape[0])) ** 2))
