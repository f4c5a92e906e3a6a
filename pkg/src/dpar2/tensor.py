"""Irregular dense tensors: container, synthetic generators, and archive I/O.

A tensor here is an ordered collection of K dense float64 slices X_k of
shape (I_k x J): the row counts vary, the column count is shared.  The
binary archive format ("IRT1") is little-endian and bit-exact:

    magic b"IRT1" | u32 K | u32 J | K * ( u32 I_k | I_k*J float64 row-major )

A directory of ``slice_*.csv`` files is accepted as a human-editable
alternative.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ArchiveFormatError,
    NonFiniteInputError,
    RankTooLargeError,
    ShapeMismatchError,
)

_MAGIC = b"IRT1"
_MASK64 = (1 << 64) - 1

MODE_UNIFORM = "uniform_random"
MODE_PLANTED = "planted_parafac2"


@dataclass
class IrregularTensor:
    """K dense slices (I_k x J) sharing the column count J.

    Slices are converted to contiguous float64 and marked read-only, so a
    tensor can be shared across worker threads safely.
    """

    slices: list

    def __post_init__(self):
        if len(self.slices) < 1:
            raise ShapeMismatchError("tensor needs at least one slice")
        cols = None
        frozen = []
        for k, x in enumerate(self.slices):
            arr = np.ascontiguousarray(x, dtype=np.float64)
            if arr.ndim != 2:
                raise ShapeMismatchError(f"slice {k} must be 2-D, got ndim={arr.ndim}")
            if arr.shape[0] < 1 or arr.shape[1] < 1:
                raise ShapeMismatchError(f"slice {k} has empty shape {arr.shape}")
            if cols is None:
                cols = arr.shape[1]
            elif arr.shape[1] != cols:
                raise ShapeMismatchError(
                    f"inconsistent column counts: slice 0 has {cols}, slice {k} has {arr.shape[1]}"
                )
            if not np.isfinite(arr).all():
                raise NonFiniteInputError(f"slice {k} contains non-finite values")
            arr.setflags(write=False)
            frozen.append(arr)
        self.slices = frozen

    @property
    def num_slices(self):
        return len(self.slices)

    @property
    def num_cols(self):
        return self.slices[0].shape[1]

    @property
    def row_counts(self):
        return [x.shape[0] for x in self.slices]

    def total_sq_norm(self):
        return float(sum(float(np.dot(x.ravel(), x.ravel())) for x in self.slices))


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic tensor; generation is a pure function of this.

    ``rows`` is either one int (every slice gets that many rows in uniform
    mode; planted mode draws I_k uniformly from [rows//2, rows]) or an
    explicit per-slice list.  ``true_rank`` and ``noise_level`` only apply
    to planted mode, where each slice is Q_k H S_k V^T plus white noise
    scaled to ``noise_level`` times the slice signal norm.
    """

    rows: object
    cols: int
    num_slices: int
    mode: str = MODE_UNIFORM
    true_rank: int = 1
    noise_level: float = 0.0
    seed: int = 0


def _random_orthonormal(rng, m, n):
    q, _ = np.linalg.qr(rng.standard_normal((m, n)))
    return q


def _resolve_rows(spec, rng):
    if isinstance(spec.rows, (list, tuple, np.ndarray)):
        rows = [int(r) for r in spec.rows]
        if len(rows) != spec.num_slices:
            raise ShapeMismatchError(
                f"rows list has {len(rows)} entries for {spec.num_slices} slices"
            )
    elif spec.mode == MODE_PLANTED:
        upper = int(spec.rows)
        lower = max(spec.true_rank, upper // 2, 1)
        if upper < lower:
            raise RankTooLargeError(f"rows={upper} too small for rank {spec.true_rank}")
        rows = [int(r) for r in rng.integers(lower, upper + 1, size=spec.num_slices)]
    else:
        rows = [int(spec.rows)] * spec.num_slices
    if any(r < 1 for r in rows):
        raise ShapeMismatchError("row counts must be positive")
    return rows


def generate(spec: SyntheticSpec):
    """Build the synthetic tensor described by ``spec``.

    All randomness comes from one PCG64 stream seeded with ``spec.seed``
    and is drawn in a fixed order, so equal specs give bit-equal tensors.
    """
    if spec.num_slices < 1 or spec.cols < 1:
        raise ShapeMismatchError("need num_slices >= 1 and cols >= 1")
    if spec.mode not in (MODE_UNIFORM, MODE_PLANTED):
        raise ValueError(f"unknown mode {spec.mode!r}")
    rng = np.random.Generator(np.random.PCG64(spec.seed & _MASK64))
    rows = _resolve_rows(spec, rng)

    if spec.mode == MODE_UNIFORM:
        return IrregularTensor([rng.random((r, spec.cols)) for r in rows])

    r = spec.true_rank
    if r < 1 or r > min(min(rows), spec.cols):
        raise RankTooLargeError(
            f"true_rank {r} not in [1, min(rows, cols)] for rows>={min(rows)}, cols={spec.cols}"
        )
    if spec.noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    core = _random_orthonormal(rng, r, r)
    v = _random_orthonormal(rng, spec.cols, r)
    # Geometrically separated component magnitudes keep the instance easy
    # for alternating solvers: without the separation, cold-started ALS can
    # stall in a swamp for hundreds of iterations even on noiseless data.
    component_scale = 3.0 ** np.arange(r)
    slices = []
    for rows_k in rows:
        q_k = _random_orthonormal(rng, rows_k, r)
        s_k = rng.uniform(0.9, 1.1, r) * component_scale * rng.choice([-1.0, 1.0], r)
        signal = (q_k @ (core * s_k)) @ v.T
        noise = rng.standard_normal(signal.shape)
        if spec.noise_level > 0.0:
            denom = np.linalg.norm(noise)
            scale = spec.noise_level * np.linalg.norm(signal) / denom if denom > 0 else 0.0
            slices.append(signal + scale * noise)
        else:
            slices.append(signal)
    return IrregularTensor(slices)


def save_archive(tensor: IrregularTensor, path):
    """Write the binary archive; round-trips bit-exactly through load_archive."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", tensor.num_slices, tensor.num_cols))
        for x in tensor.slices:
            fh.write(struct.pack("<I", x.shape[0]))
            fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def load_archive(path):
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != _MAGIC:
        raise ArchiveFormatError(f"{path}: bad magic, not an IRT1 archive")
    off = 4
    if len(data) < off + 8:
        raise ArchiveFormatError(f"{path}: truncated header")
    num_slices, cols = struct.unpack_from("<II", data, off)
    off += 8
    if num_slices < 1 or cols < 1:
        raise ArchiveFormatError(f"{path}: invalid dimensions K={num_slices}, J={cols}")
    slices = []
    for k in range(num_slices):
        if len(data) < off + 4:
            raise ArchiveFormatError(f"{path}: truncated at slice {k} header")
        (rows,) = struct.unpack_from("<I", data, off)
        off += 4
        if rows < 1:
            raise ArchiveFormatError(f"{path}: slice {k} has zero rows")
        nbytes = rows * cols * 8
        if len(data) < off + nbytes:
            raise ArchiveFormatError(f"{path}: truncated payload in slice {k}")
        arr = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=off)
        slices.append(arr.reshape(rows, cols).copy())
        off += nbytes
    if off != len(data):
        raise ArchiveFormatError(f"{path}: {len(data) - off} trailing bytes after last slice")
    try:
        return IrregularTensor(slices)
    except NonFiniteInputError as exc:
        raise ArchiveFormatError(f"{path}: {exc}") from exc


def load_csv_dir(path):
    """Load a tensor from a directory of ``slice_*.csv`` files (sorted by name)."""
    files = sorted(Path(path).glob("slice_*.csv"))
    if not files:
        raise ArchiveFormatError(f"{path}: no slice_*.csv files found")
    slices = []
    for f in files:
        arr = np.loadtxt(f, delimiter=",", ndmin=2, dtype=np.float64)
        slices.append(arr)
    return IrregularTensor(slices)
