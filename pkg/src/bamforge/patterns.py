"""Paired bipolar pattern sets: generation, file ingestion, and corruption.

Conventions: columns are patterns everywhere; entries are exactly -1.0 or
+1.0. Randomness goes through numpy's seeded Generator (PCG64), so every
generator and corruption here is bit-reproducible for a fixed seed.
"""

import os
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    """Malformed IDX/PGM/weight file."""


@dataclass(frozen=True)
class PatternSet:
    """Paired bipolar patterns; side_a is n_A x P, side_b is n_B x P."""

    side_a: np.ndarray
    side_b: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        a, b = self.side_a, self.side_b
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError("pattern matrices must be 2-D")
        if a.shape[1] != b.shape[1]:
            raise ValueError(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
        if a.shape[1] < 1:
            raise ValueError("at least one pattern pair required")
        for name, m in (("side_a", a), ("side_b", b)):
            if not np.all(np.abs(m) == 1.0):
                raise ValueError(f"{name} has entries outside {{-1, +1}}")
        if not self.names:
            object.__setattr__(self, "names", [str(i) for i in range(a.shape[1])])
        elif len(self.names) != a.shape[1]:
            raise ValueError("names length must match pattern count")

    @property
    def n_a(self) -> int:
        return self.side_a.shape[0]

    @property
    def n_b(self) -> int:
        return self.side_b.shape[0]

    @property
    def count(self) -> int:
        return self.side_a.shape[1]


class CorruptionKind(Enum):
    MASK_FRACTION = "mask"
    GAUSSIAN_NOISE = "gn"


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    fraction: float = 0.5
    mask_value: float = -1.0
    mean: float = 0.0
    variance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"fraction must be in [0, 1], got {self.fraction}")
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


def bipolarize(values: np.ndarray, threshold: float) -> np.ndarray:
    """Map values >= threshold to +1.0, the rest to -1.0."""
    return np.where(np.asarray(values) >= threshold, 1.0, -1.0)


def gen_random_pairs(count: int, n_a: int, n_b: int, seed: int) -> PatternSet:
    """I.i.d. uniform bipolar pattern pairs, deterministic per seed."""
    if count < 1 or n_a < 1 or n_b < 1:
        raise ValueError("count and dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    side_a = rng.integers(0, 2, size=(n_a, count)).astype(np.float64) * 2.0 - 1.0
    side_b = rng.integers(0, 2, size=(n_b, count)).astype(np.float64) * 2.0 - 1.0
    return PatternSet(side_a=side_a, side_b=side_b)


def load_idx(path: str, threshold: int = 128) -> np.ndarray:
    """Load an IDX ubyte image file as a bipolar matrix, one column per image.

    Pixels >= threshold map to +1, else -1. Label files are rejected.
    """
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 4:
            raise FormatError(f"{path}: truncated IDX header")
        magic = struct.unpack(">I", header[:4])[0]
        if magic == IDX_LABELS_MAGIC:
            raise FormatError(f"{path}: IDX label file, expected an image file")
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
        if len(header) < 16:
            raise FormatError(f"{path}: truncated IDX header")
        count, rows, cols = struct.unpack(">III", header[4:16])
        payload = fh.read(count * rows * cols)
    if len(payload) != count * rows * cols:
        raise FormatError(f"{path}: truncated IDX payload")
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    return bipolarize(raw.T.astype(np.float64), float(threshold))


def save_idx(columns: np.ndarray, rows: int, cols: int, path: str) -> None:
    """Write bipolar pattern columns as an IDX ubyte image file.

    Each column becomes one rows x cols image; +1 maps to 255, -1 to 0,
    so load_idx round-trips the sign pattern at any threshold in (0, 255].
    """
    columns = np.atleast_2d(np.asarray(columns, dtype=np.float64))
    if columns.shape[0] != rows * cols:
        raise ValueError(f"column length {columns.shape[0]} != {rows}x{cols}")
    raw = np.where(columns >= 0, 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, columns.shape[1], rows, cols))
        fh.write(raw.T.tobytes())


def _read_pgm(path: str) -> np.ndarray:
    """Parse a P2/P5 PGM image into a 2-D uint array (rows x cols)."""
    with open(path, "rb") as fh:
        data = fh.read()

    # tokenizer shared by header (both formats) and P2 pixel values
    tokens = []
    i = 0
    while i < len(data) and len(tokens) < 4:
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    if len(tokens) < 4:
        raise FormatError(f"{path}: truncated PGM header")
    fmt = tokens[0]
    if fmt not in (b"P2", b"P5"):
        raise FormatError(f"{path}: not a PGM file (got {fmt!r})")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric PGM header") from exc
    if maxval <= 0 or maxval > 255:
        raise FormatError(f"{path}: unsupported PGM maxval {maxval}")

    if fmt == b"P5":
        i += 1  # single whitespace byte after maxval
        pixels = np.frombuffer(data[i : i + width * height], dtype=np.uint8)
        if pixels.size != width * height:
            raise FormatError(f"{path}: truncated PGM payload")
    else:
        try:
            pixels = np.array(data[i:].split()[: width * height], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"{path}: bad P2 pixel data") from exc
        if pixels.size != width * height:
            raise FormatError(f"{path}: truncated PGM payload")
    return pixels.reshape(height, width)


def load_image_dir(path: str, threshold: int = 128):
    """Load all PGM images in a directory as bipolar columns.

    Images are sorted by filename and flattened row-major; returns
    (matrix, names) where names are filenames without extension.
    """
    files = sorted(f for f in os.listdir(path) if f.lower().endswith(".pgm"))
    if not files:
        raise FormatError(f"{path}: no PGM images found")
    columns, names, shape = [], [], None
    for fname in files:
        img = _read_pgm(os.path.join(path, fname))
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise ValueError(
                f"{path}/{fname}: image shape {img.shape} differs from {shape}"
            )
        columns.append(bipolarize(img.reshape(-1).astype(np.float64), float(threshold)))
        names.append(os.path.splitext(fname)[0])
    return np.stack(columns, axis=1), names


def load_paired_dirs(path_a: str, path_b: str, threshold: int = 128) -> PatternSet:
    """Build a PatternSet from two image directories paired by filename."""
    mat_a, names_a = load_image_dir(path_a, threshold)
    mat_b, names_b = load_image_dir(path_b, threshold)
    if names_a != names_b:
        raise ValueError("directories do not contain matching filenames")
    return PatternSet(side_a=mat_a, side_b=mat_b, names=names_a)


def corrupt(x: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Corrupt one pattern column; output is not re-clipped to [-1, 1]."""
    x = np.asarray(x, dtype=np.float64)
    if spec.kind is CorruptionKind.MASK_FRACTION:
        out = x.copy()
        masked = int(spec.fraction * x.shape[0])
        if masked > 0:
            out[x.shape[0] - masked :] = spec.mask_value
        return out
    rng = np.random.default_rng(spec.seed)
    return x + rng.normal(spec.mean, np.sqrt(spec.variance), size=x.shape)
