"""Command-line front end: configs, training, attacks, sweeps, table runs.

Exit codes: 0 success, 2 configuration error (message names the offending
field), 3 numeric failure during training or evaluation.
"""

import argparse
import hashlib
import json
import os
import platform
import sys


def _apply_thread_cap():
    """Honor BAMFORGE_THREADS by capping the BLAS pools, if set early enough.

    Must run before numpy is imported, which is why this module defers its
    heavy imports until after this call.
    """
    cap = os.environ.get("BAMFORGE_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


_apply_thread_cap()

import numpy as np

from . import __version__
from .attacks import AttackKind, AttackSpec, Direction
from .bp import BpConfig, Strategy, train_bbp
from .core import End, init_orthogonal, load_model, retrieve, save_model
from .evaluate import (bit_error_rate, emit_csv, emit_pgm_grid, measure_gpa,
                       measure_owm, mse, robustness_sweep)
from .patterns import (PatternSet, gen_random_pairs, load_idx,
                       load_paired_dirs, save_idx)
from .sra import SraConfig, train_bsra

STRATEGY_NAMES = ("SRA", "BP", "ORTH", "ALIGN", "SAME", "DIFF")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _require(cfg: dict, field: str, kind=None):
    if field not in cfg:
        raise ConfigError(f"missing required field '{field}'")
    value = cfg[field]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"field '{field}' has wrong type "
                          f"(got {type(value).__name__})")
    return value


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON: {exc}") from exc


def _build_patterns(data_cfg: dict) -> PatternSet:
    source = _require(data_cfg, "source", str)
    if source == "synthetic":
        return gen_random_pairs(
            _require(data_cfg, "count", int),
            _require(data_cfg, "dim_a", int),
            _require(data_cfg, "dim_b", int),
            int(data_cfg.get("seed", 0)),
        )
    if source == "idx":
        threshold = int(data_cfg.get("threshold", 128))
        return PatternSet(
            side_a=load_idx(_require(data_cfg, "path_a", str), threshold),
            side_b=load_idx(_require(data_cfg, "path_b", str), threshold),
        )
    if source == "image_dirs":
        return load_paired_dirs(
            _require(data_cfg, "path_a", str),
            _require(data_cfg, "path_b", str),
            int(data_cfg.get("threshold", 128)),
        )
    raise ConfigError(f"field 'source' must be one of synthetic/idx/image_dirs,"
                      f" got '{source}'")


def _init_model(layer_dims, init: str, seed: int):
    if init == "orthogonal":
        return init_orthogonal(layer_dims, seed=seed)
    if init == "normal":
        from .core import BamModel
        rng = np.random.default_rng(seed)
        weights = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in),
                                      size=(fan_out, fan_in)))
        return BamModel(weights=tuple(weights))
    raise ConfigError(f"field 'init' must be orthogonal or normal, got '{init}'")


def _train_from_config(cfg: dict, pats: PatternSet, seed_override=None):
    train_cfg = _require(cfg, "train", dict)
    strategy = _require(train_cfg, "strategy", str)
    if strategy not in STRATEGY_NAMES:
        raise ConfigError(f"field 'strategy' must be one of "
                          f"{'/'.join(STRATEGY_NAMES)}, got '{strategy}'")
    model_cfg = cfg.get("model", {})
    layer_dims = model_cfg.get("layer_dims",
                               [pats.side_a.shape[0],
                                min(pats.side_a.shape[0], pats.side_b.shape[0]),
                                pats.side_b.shape[0]])
    seed = int(train_cfg.get("seed", 0)) if seed_override is None else seed_override
    init = train_cfg.get("init", "orthogonal")
    model = _init_model(layer_dims, init, seed)

    if strategy == "SRA":
        config = SraConfig(
            epochs=int(train_cfg.get("epochs", 100)),
            stop_on_perfect_recall=bool(train_cfg.get("stop_on_perfect_recall", True)),
            rotate_inner_layers=bool(train_cfg.get("rotate_inner_layers",
                                                   len(layer_dims) > 3)),
            seed=seed,
        )
        trained, history = train_bsra(pats, model, config)
        return trained, history, strategy
    config = BpConfig(
        strategy=Strategy[strategy],
        lr=float(train_cfg.get("lr", 1e-4)),
        epochs=int(train_cfg.get("epochs", 100)),
        lambda_ortho=float(train_cfg.get("lambda_ortho", 1e-3)),
        lambda_align=float(train_cfg.get("lambda_align", 1e-2)),
        seed=seed,
    )
    trained, history = train_bbp(pats, model, config)
    return trained, history, strategy


def _parse_attack(spec: dict) -> AttackSpec:
    kind_name = _require(spec, "kind", str)
    try:
        kind = AttackKind[kind_name]
    except KeyError:
        raise ConfigError(f"field 'kind' must be one of "
                          f"{'/'.join(k.name for k in AttackKind)}, "
                          f"got '{kind_name}'") from None
    direction = spec.get("direction", "AtoB")
    if direction not in ("AtoB", "BtoA"):
        raise ConfigError(f"field 'direction' must be AtoB or BtoA, "
                          f"got '{direction}'")
    try:
        return AttackSpec(
            kind=kind,
            epsilon=float(spec.get("epsilon", 0.0)),
            alpha=float(spec.get("alpha", 0.0)),
            iterations=int(spec.get("iterations", 1)),
            variance=float(spec.get("variance", 1.0)),
            seed=int(spec.get("seed", 0)),
            direction=Direction(direction),
        )
    except ValueError as exc:
        raise ConfigError(f"attack spec: {exc}") from exc


def _write_manifest(out_dir: str, command: str, cfg: dict, seed) -> None:
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "config": cfg,
        "seed": seed,
        "versions": {
            "bamforge": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args, cfg) -> str:
    out = args.out or cfg.get("eval", {}).get("output_dir") or "."
    os.makedirs(out, exist_ok=True)
    return out


# subcommands


def _cmd_gen_data(args) -> int:
    count, rows, cols = args.count, args.rows, args.cols
    if count < 1 or rows < 1 or cols < 1:
        raise ConfigError("fields 'count'/'rows'/'cols' must be >= 1")
    pats = gen_random_pairs(count, rows * cols, rows * cols, args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_idx(pats.side_a, rows, cols, os.path.join(args.out, "side_a.idx"))
    save_idx(pats.side_b, rows, cols, os.path.join(args.out, "side_b.idx"))
    _write_manifest(args.out, "gen-data",
                    {"count": count, "rows": rows, "cols": cols}, args.seed)
    print(f"wrote {count} pattern pairs ({rows}x{cols}) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args.config)
    pats = _build_patterns(_require(cfg, "data", dict))
    model, history, strategy = _train_from_config(cfg, pats, args.seed)
    out = _out_dir(args, cfg)
    model_path = os.path.join(out, "model.bamw")
    save_model(model, model_path)
    _write_history_csv(history, strategy, os.path.join(out, "history.csv"))
    _write_manifest(out, "train", cfg, args.seed)
    print(f"trained {strategy} model -> {model_path}")
    return 0


def _write_history_csv(history, strategy, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if strategy == "SRA":
            fh.write("epoch,gap_b,gap_a\n")
            for i, (gb, ga) in enumerate(zip(history.gap_b, history.gap_a)):
                fh.write(f"{i},{gb:.6g},{ga:.6g}\n")
        else:
            fh.write("epoch,e_forward,e_backward,owm,gpa,total\n")
            for i, row in enumerate(history):
                fh.write(f"{i},{row.e_forward:.6g},{row.e_backward:.6g},"
                         f"{row.owm:.6g},{row.gpa:.6g},{row.total:.6g}\n")


def _cmd_retrieve(args) -> int:
    model = load_model(args.model)
    queries = load_idx(args.input)
    start = End.A if args.start == "A" else End.B
    retrieved = np.column_stack([
        retrieve(model, queries[:, j], start_end=start).pattern.ravel()
        for j in range(queries.shape[1])
    ])
    out_dim = retrieved.shape[0]
    rows = args.rows or int(np.sqrt(out_dim))
    cols = out_dim // rows
    if rows * cols != out_dim:
        raise ConfigError(f"field 'rows': {rows} does not divide "
                          f"output dim {out_dim}")
    os.makedirs(args.out, exist_ok=True)
    save_idx(retrieved, rows, cols, os.path.join(args.out, "retrieved.idx"))
    emit_pgm_grid(retrieved, cols, rows, os.path.join(args.out, "retrieved.pgm"))
    print(f"retrieved {queries.shape[1]} patterns -> {args.out}")
    return 0


def _cmd_attack(args) -> int:
    cfg = _load_config(args.config)
    pats = _build_patterns(_require(cfg, "data", dict))
    if "model_path" in cfg:
        model = load_model(cfg["model_path"])
        strategy = cfg.get("strategy", "loaded")
    else:
        model, _, strategy = _train_from_config(cfg, pats, args.seed)
    specs = [_parse_attack(s) for s in _require(cfg, "attacks", list)]
    out = _out_dir(args, cfg)
    from .attacks import apply_attack
    from .core import _sign, forward_ab, forward_ba
    lines = ["attack,direction,input_mse,output_mse,ber"]
    for spec in specs:
        if spec.direction is Direction.A_TO_B:
            x, truth = pats.side_a, pats.side_b
            x_adv = apply_attack(model, x, truth, spec)
            logits = forward_ab(model, x_adv).logits
        else:
            x, truth = pats.side_b, pats.side_a
            x_adv = apply_attack(model, x, truth, spec)
            logits = forward_ba(model, x_adv).logits
        got = _sign(logits)
        lines.append(",".join([
            spec.kind.value, spec.direction.value,
            f"{mse(x_adv, x):.6g}", f"{mse(got, truth):.6g}",
            f"{bit_error_rate(got, truth):.6g}",
        ]))
    path = os.path.join(out, "attack.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_manifest(out, "attack", cfg, args.seed)
    print(f"attacked {strategy} model, report -> {path}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    pats = _build_patterns(_require(cfg, "data", dict))
    strategies = _require(cfg, "strategies", list)
    models = {}
    for entry in strategies:
        sub = dict(cfg)
        sub["train"] = entry
        model, _, strategy = _train_from_config(sub, pats, args.seed)
        models[strategy] = model
    specs = [_parse_attack(s) for s in _require(cfg, "attacks", list)]
    eval_cfg = cfg.get("eval", {})
    trials = args.trials or int(eval_cfg.get("trials", 10))
    base_seed = int(eval_cfg.get("base_seed", 0))
    report = robustness_sweep(models, specs, pats, trials=trials,
                              base_seed=base_seed)
    out = _out_dir(args, cfg)
    path = os.path.join(out, "sweep.csv")
    emit_csv(report, path)
    _write_manifest(out, "sweep", cfg, args.seed)
    print(f"sweep report -> {path}")
    return 0


# table reproduction presets
#
# Desk scale keeps every run in seconds on one core; paper scale uses the
# published pattern dimensions and takes correspondingly longer.

_DESK = {
    "table12": {"count": 50, "dim": 64},
    "table3": {"count": 100, "dim": 256},
    "table4": {"counts": (50, 100, 200), "dim": 256},
    "sra": {"epochs": 100},
    "bp": {"lr": 1e-2, "epochs": 300, "lambda_ortho": 0.1, "lambda_align": 100.0},
    "trials": 5,
}
_PAPER = {
    "table12": {"count": 50, "dim": 784},
    "table3": {"count": 100, "dim": 2120},
    "table4": {"counts": (50, 100, 200), "dim": 784},
    "sra": {"epochs": 100},
    "bp": {"lr": 1e-4, "epochs": 2000, "lambda_ortho": 0.1, "lambda_align": 100.0},
    "trials": 10,
}

_TABLE_ATTACKS = [
    {"kind": "GN", "variance": 1.0},
    {"kind": "FGSM", "epsilon": 1.1},
    {"kind": "FFGSM", "epsilon": 1.0, "alpha": 2.0},
    {"kind": "PGD", "epsilon": 0.8, "alpha": 2.0, "iterations": 20},
]


def _preset(args):
    return _DESK if args.scale == "desk" else _PAPER


def _train_all_strategies(count, dim, preset, seed):
    pats = gen_random_pairs(count, dim, dim, seed)
    models = {}
    for strategy in STRATEGY_NAMES:
        cfg = {"data": {}, "model": {"layer_dims": [dim, dim, dim]},
               "train": {"strategy": strategy, "seed": seed}}
        if strategy == "SRA":
            cfg["train"].update(preset["sra"])
        else:
            cfg["train"].update(preset["bp"])
            if strategy == "BP":
                cfg["train"]["init"] = "normal"
        model, _, _ = _train_from_config(cfg, pats)
        models[strategy] = model
    return pats, models


def _cmd_table1(args) -> int:
    preset = _preset(args)
    scale = preset["table12"]
    pats, models = _train_all_strategies(scale["count"], scale["dim"],
                                         preset, args.seed)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    lines = ["strategy,gpa_a,gpa_b,owm_a,owm_b"]
    for name, model in models.items():
        lines.append(",".join([
            name,
            f"{measure_gpa(model, pats, End.A):.6g}",
            f"{measure_gpa(model, pats, End.B):.6g}",
            f"{measure_owm(model, End.A):.6g}",
            f"{measure_owm(model, End.B):.6g}",
        ]))
    path = os.path.join(out, "table1.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_manifest(out, "reproduce-table1",
                    {"scale": args.scale, "preset": repr(preset)}, args.seed)
    print(f"strategy metrics -> {path}")
    return 0


def _sweep_to_csv(models, pats, args, preset, name, out):
    specs = [_parse_attack(s) for s in _TABLE_ATTACKS]
    trials = args.trials or preset["trials"]
    report = robustness_sweep(models, specs, pats, trials=trials,
                              base_seed=args.seed)
    path = os.path.join(out, name)
    emit_csv(report, path)
    return path


def _cmd_table2(args) -> int:
    preset = _preset(args)
    scale = preset["table12"]
    pats, models = _train_all_strategies(scale["count"], scale["dim"],
                                         preset, args.seed)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = _sweep_to_csv(models, pats, args, preset, "table2.csv", out)
    _write_manifest(out, "reproduce-table2",
                    {"scale": args.scale, "preset": repr(preset)}, args.seed)
    print(f"ablation robustness table -> {path}")
    return 0


def _cmd_table3(args) -> int:
    preset = _preset(args)
    scale = preset["table3"]
    pats, models = _train_all_strategies(scale["count"], scale["dim"],
                                         preset, args.seed)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = _sweep_to_csv(models, pats, args, preset, "table3.csv", out)
    _write_manifest(out, "reproduce-table3",
                    {"scale": args.scale, "preset": repr(preset)}, args.seed)
    print(f"100-pair robustness table -> {path}")
    return 0


def _cmd_table4(args) -> int:
    preset = _preset(args)
    scale = preset["table4"]
    dim = scale["dim"]
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    specs = [_parse_attack(s) for s in _TABLE_ATTACKS]
    trials = args.trials or preset["trials"]
    all_rows = []
    from .evaluate import RobustnessReport
    for count in scale["counts"]:
        pats = gen_random_pairs(count, dim, dim, args.seed)
        # 3 weight layers below 200 pairs, 5 at 200, following the capacity
        # study's depth schedule
        depth_dims = [dim] * (5 if count >= 200 else 3)
        for strategy in ("SRA", "SAME"):
            cfg = {"data": {}, "model": {"layer_dims": depth_dims},
                   "train": {"strategy": strategy, "seed": args.seed}}
            cfg["train"].update(preset["sra"] if strategy == "SRA"
                                else preset["bp"])
            model, _, _ = _train_from_config(cfg, pats)
            report = robustness_sweep({f"{strategy}({count})": model}, specs,
                                      pats, trials=trials, base_seed=args.seed)
            all_rows.extend(report.rows)
    path = os.path.join(out, "table4.csv")
    emit_csv(RobustnessReport(rows=all_rows), path)
    _write_manifest(out, "reproduce-table4",
                    {"scale": args.scale, "preset": repr(preset)}, args.seed)
    print(f"capacity robustness table -> {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bamforge",
        description="Bidirectional associative memory training and "
                    "robustness harness.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    p = sub.add_parser("gen-data", help="write synthetic IDX pattern pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model from a JSON config")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("retrieve", help="run iterative retrieval on IDX queries")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="IDX file of query patterns")
    p.add_argument("--start", choices=("A", "B"), default="A")
    p.add_argument("--rows", type=int, default=None,
                   help="image rows for the output grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("attack", help="attack a model and report metrics")
    common(p)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("sweep", help="multi-strategy robustness sweep")
    common(p)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    for n, fn, help_text in (
            ("reproduce-table1", _cmd_table1, "strategy GPA/OWM metrics"),
            ("reproduce-table2", _cmd_table2, "ablation robustness table"),
            ("reproduce-table3", _cmd_table3, "100-pair robustness table"),
            ("reproduce-table4", _cmd_table4, "capacity robustness table")):
        p = sub.add_parser(n, help=help_text)
        p.add_argument("--scale", choices=("desk", "paper"), default="desk")
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=int, default=None)
        p.set_defaults(func=fn)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
