"""Multi-layer bidirectional associative memory with rotation-based and
regularized gradient trainers, plus an adversarial robustness harness."""

from .attacks import AttackKind, AttackSpec, Direction, apply_attack
from .bp import BpConfig, LossBreakdown, Strategy, train_bbp
from .core import (
    Activation,
    BamModel,
    End,
    PassTrace,
    energy,
    forward_ab,
    forward_ba,
    hebbian_classic,
    init_orthogonal,
    load_model,
    retrieve,
    save_model,
)
from .estimators import BbpMemory, BsraMemory
from .evaluate import (
    RobustnessReport,
    bit_error_rate,
    emit_csv,
    emit_pgm_grid,
    measure_gpa,
    measure_owm,
    mse,
    robustness_sweep,
)
from .patterns import (
    CorruptionKind,
    CorruptionSpec,
    PatternSet,
    corrupt,
    gen_random_pairs,
    load_idx,
    load_image_dir,
    load_paired_dirs,
    save_idx,
)
from .procrustes import RotationResult, alignment_gap, solve_rotation
from .sra import SraConfig, train_bsra

__version__ = "0.1.0"

__all__ = [
    "Activation", "AttackKind", "AttackSpec", "BamModel", "BbpMemory",
    "BpConfig", "BsraMemory", "CorruptionKind", "CorruptionSpec", "Direction",
    "End", "LossBreakdown", "PassTrace", "PatternSet", "RobustnessReport",
    "RotationResult", "SraConfig", "Strategy", "alignment_gap", "apply_attack",
    "bit_error_rate", "corrupt", "emit_csv", "emit_pgm_grid", "energy",
    "forward_ab", "forward_ba", "gen_random_pairs", "hebbian_classic",
    "init_orthogonal", "load_idx", "load_image_dir", "load_model",
    "load_paired_dirs", "measure_gpa", "measure_owm", "mse", "retrieve",
    "robustness_sweep", "save_idx", "save_model", "solve_rotation", "train_bbp",
    "train_bsra",
]
