"""Metrics and the robustness sweep that regenerates the ablation tables.

The sweep perturbs every pattern at one end, does a single sign-discretized
round trip, and reports input-perturbation MSE and output MSE against the
stored partner, as mean +/- std over seeded trials. Output rows follow the
four-column (Input A, Output B, Input B, Output A) table schema.
"""

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import AttackSpec, Direction, apply_attack
from .bp import gpa_cosine
from .core import BamModel, End, forward_ab, forward_ba, gram_deviation, _sign
from .patterns import PatternSet

CSV_HEADER = ("attack,strategy,direction,input_mse_mean,input_mse_std,"
              "output_mse_mean,output_mse_std,ber_mean,ber_std,trials,"
              "cont_mse_mean,cont_mse_std")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared componentwise difference."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def bit_error_rate(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of mismatched components of two bipolar vectors/matrices."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(a != b))


def measure_gpa(model: BamModel, pats: PatternSet, end: End) -> float:
    """Measurement-only mean gradient-pattern cosine at one end."""
    return gpa_cosine(model, pats, end)


def measure_owm(model: BamModel, end: End) -> float:
    """Summed Gram deviation of the weights nearer the given end."""
    import math

    split = math.ceil(model.depth / 2)
    devs = [gram_deviation(w) for w in model.weights]
    if model.depth == 1:
        return float(devs[0])
    return float(sum(devs[:split])) if end is End.A else float(sum(devs[split:]))


@dataclass(frozen=True)
class DirectionStats:
    input_mse_mean: float
    input_mse_std: float
    output_mse_mean: float
    output_mse_std: float
    ber_mean: float
    ber_std: float
    cont_mse_mean: float
    cont_mse_std: float


@dataclass(frozen=True)
class ReportRow:
    attack: str
    strategy: str
    a_to_b: DirectionStats
    b_to_a: DirectionStats
    trials: int


@dataclass(frozen=True)
class RobustnessReport:
    rows: list
    metadata: dict = field(default_factory=dict)


def _one_trial(model: BamModel, pats: PatternSet, spec: AttackSpec):
    """(input mse, sign-output mse, ber, continuous-output mse) for one trial."""
    if spec.direction is Direction.A_TO_B:
        x, truth = pats.side_a, pats.side_b
        x_adv = apply_attack(model, x, truth, spec)
        logits = forward_ab(model, x_adv).logits
    else:
        x, truth = pats.side_b, pats.side_a
        x_adv = apply_attack(model, x, truth, spec)
        logits = forward_ba(model, x_adv).logits
    retrieved = _sign(logits)
    return (mse(x_adv, x), mse(retrieved, truth),
            bit_error_rate(retrieved, truth), mse(np.tanh(logits), truth))


def _direction_stats(model, pats, spec, trials, base_seed) -> DirectionStats:
    samples = np.array([
        _one_trial(model, pats, replace(spec, seed=base_seed + t))
        for t in range(trials)
    ])
    means = samples.mean(axis=0)
    stds = samples.std(axis=0)
    return DirectionStats(
        input_mse_mean=means[0], input_mse_std=stds[0],
        output_mse_mean=means[1], output_mse_std=stds[1],
        ber_mean=means[2], ber_std=stds[2],
        cont_mse_mean=means[3], cont_mse_std=stds[3],
    )


def robustness_sweep(models: dict, attack_specs: list, pats: PatternSet,
                     trials: int = 10, base_seed: int = 0) -> RobustnessReport:
    """Run every (attack, strategy) cell, both directions, over seeded trials.

    models maps strategy name -> BamModel; iteration order of both inputs is
    preserved in the report, so identical inputs give identical reports.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dims = {(m.n_a, m.n_b) for m in models.values()}
    if len(dims) > 1:
        raise ValueError(f"models disagree on pattern dims: {sorted(dims)}")
    rows = []
    for spec in attack_specs:
        for strategy, model in models.items():
            rows.append(ReportRow(
                attack=spec.kind.value, strategy=strategy,
                a_to_b=_direction_stats(model, pats, replace(spec, direction=Direction.A_TO_B),
                                        trials, base_seed),
                b_to_a=_direction_stats(model, pats, replace(spec, direction=Direction.B_TO_A),
                                        trials, base_seed),
                trials=trials,
            ))
    metadata = {
        "base_seed": base_seed,
        "trials": trials,
        "attacks": [repr(s) for s in attack_specs],
        "model_hashes": {
            name: hashlib.sha256(b"".join(w.tobytes() for w in m.weights)).hexdigest()
            for name, m in models.items()
        },
    }
    return RobustnessReport(rows=rows, metadata=metadata)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def emit_csv(report: RobustnessReport, path: str) -> None:
    """Write the report as UTF-8 CSV, 6 significant digits, LF endings."""
    lines = [CSV_HEADER]
    for row in report.rows:
        for direction, stats in (("AtoB", row.a_to_b), ("BtoA", row.b_to_a)):
            lines.append(",".join([
                row.attack, row.strategy, direction,
                _fmt(stats.input_mse_mean), _fmt(stats.input_mse_std),
                _fmt(stats.output_mse_mean), _fmt(stats.output_mse_std),
                _fmt(stats.ber_mean), _fmt(stats.ber_std),
                str(row.trials),
                _fmt(stats.cont_mse_mean), _fmt(stats.cont_mse_std),
            ]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_pgm_grid(columns: np.ndarray, width: int, height: int, path: str) -> None:
    """Tile pattern columns into a single P5 PGM image.

    Each column is one width x height image (row-major). Values map
    -1 -> 0 and +1 -> 255, linearly in between, clipped outside.
    """
    columns = np.atleast_2d(np.asarray(columns, dtype=np.float64))
    if columns.shape[0] != width * height:
        raise ValueError(f"column length {columns.shape[0]} != {width}x{height}")
    p = columns.shape[1]
    ncols = int(np.ceil(np.sqrt(p)))
    nrows = int(np.ceil(p / ncols))
    canvas = np.zeros((nrows * height, ncols * width), dtype=np.uint8)
    gray = np.clip((columns + 1.0) * 127.5, 0, 255).astype(np.uint8)
    for j in range(p):
        r, c = divmod(j, ncols)
        canvas[r * height:(r + 1) * height, c * width:(c + 1) * width] = \
            gray[:, j].reshape(height, width)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{canvas.shape[1]} {canvas.shape[0]}\n255\n".encode())
        fh.write(canvas.tobytes())
