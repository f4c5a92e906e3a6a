"""Two-stage randomized compression of an irregular tensor.

Stage 1 sketches every slice independently: X_k ~ A_k B_k C_k^T with A_k
(I_k x R) column-orthonormal.  Stage 2 concatenates the small right parts
M = [C_1 B_1 | ... | C_K B_K] (J x KR) and sketches once more,
M ~ D diag(E) F^T, leaving

    X_k ~ A_k F_k diag(E) D^T

where F_k is the k-th (R x R) block of F (KR x R).  Only A_k, D, E, F are
kept: sum(I_k) R + K R^2 + J R + R floats in total.

Per-slice sketch seeds derive from (seed, k) only, so results never depend
on the work partition or thread count.  The archive format ("IRC1"):

    magic | u32 K | u32 J | u32 R | D | E | F | K * ( u32 I_k | A_k )

with all float payloads little-endian float64, row-major.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ArchiveFormatError, NumericFailure, RankTooLargeError
from .linalg import RsvdParams, derived_seed, randomized_svd
from .scheduler import greedy_partition, parallel_slice_map, resolve_threads
from .tensor import IrregularTensor


@dataclass
class CompressedTensor:
    """Compact factors: per-slice bases, shared column basis, weights, cores."""

    rank: int
    slice_bases: list  # A_k, each I_k x R, column-orthonormal
    col_basis: np.ndarray  # D, J x R, column-orthonormal
    weights: np.ndarray  # E, length R, nonnegative descending
    cores: np.ndarray  # F, KR x R stacked blocks, orthonormal columns

    @property
    def num_slices(self):
        return len(self.slice_bases)

    @property
    def num_cols(self):
        return self.col_basis.shape[0]

    @property
    def row_counts(self):
        return [a.shape[0] for a in self.slice_bases]

    def core_block(self, k):
        """The R x R block F_k coupling slice k to the shared basis."""
        r = self.rank
        return self.cores[k * r : (k + 1) * r]

    def core_stack(self):
        """All blocks as one (K, R, R) view."""
        return self.cores.reshape(self.num_slices, self.rank, self.rank)

    def float_count(self):
        """Stored float64 count: sum(I_k) R + K R^2 + J R + R."""
        return (
            sum(a.size for a in self.slice_bases)
            + self.cores.size
            + self.col_basis.size
            + self.weights.size
        )


def compress(tensor: IrregularTensor, rank, rsvd: RsvdParams | None = None,
             stage2: RsvdParams | None = None, plan=None, threads=None):
    """Compress ``tensor`` at ``rank`` with two randomized-SVD stages.

    ``rsvd`` supplies oversampling / power-iteration / seed settings for the
    per-slice stage (its rank field is overridden by ``rank``); ``stage2``
    optionally overrides them for the concatenated stage.  ``plan`` chooses
    which worker sketches which slice and has no effect on the values.
    """
    if rank < 1:
        raise RankTooLargeError(f"rank must be >= 1, got {rank}")
    if rank > tensor.num_cols:
        raise RankTooLargeError(f"rank {rank} exceeds column count {tensor.num_cols}")
    for k, rows in enumerate(tensor.row_counts):
        if rank > rows:
            raise RankTooLargeError(f"rank {rank} exceeds row count {rows} of slice {k}")
    base = rsvd if rsvd is not None else RsvdParams(rank=rank)
    threads = resolve_threads(threads)
    if plan is None:
        plan = greedy_partition(tensor.row_counts, threads)

    def sketch(k):
        params = replace(base, rank=rank, seed=derived_seed(base.seed, k))
        try:
            return randomized_svd(tensor.slices[k], params)
        except NumericFailure as exc:
            raise NumericFailure(str(exc), slice_index=k) from exc
        except np.linalg.LinAlgError as exc:
            raise NumericFailure("sketch factorization failed", slice_index=k) from exc

    stage1 = parallel_slice_map(sketch, tensor.num_slices, threads=threads, groups=plan.sets)

    # J x KR concatenation of the slice right parts C_k B_k, in slice order.
    merged = np.concatenate([trip.V * trip.S for trip in stage1], axis=1)
    second = stage2 if stage2 is not None else base
    second = replace(second, rank=rank, seed=derived_seed(second.seed, tensor.num_slices))
    shared = randomized_svd(merged, second)

    return CompressedTensor(
        rank=rank,
        slice_bases=[trip.U for trip in stage1],
        col_basis=shared.U,
        weights=shared.S,
        cores=np.ascontiguousarray(shared.V),
    )


def reconstruct_slice(comp: CompressedTensor, k):
    """Materialize slice k as A_k (F_k (diag(E) D^T)); cost O(I_k J R)."""
    if not 0 <= k < comp.num_slices:
        raise IndexError(f"slice index {k} out of range [0, {comp.num_slices})")
    small = comp.core_block(k) @ (comp.weights[:, None] * comp.col_basis.T)
    return comp.slice_bases[k] @ small


_MAGIC = b"IRC1"


def save_compressed(comp: CompressedTensor, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", comp.num_slices, comp.num_cols, comp.rank))
        for arr in (comp.col_basis, comp.weights, comp.cores):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for a in comp.slice_bases:
            fh.write(struct.pack("<I", a.shape[0]))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_compressed(path):
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != _MAGIC:
        raise ArchiveFormatError(f"{path}: bad magic, not an IRC1 archive")
    off = 4
    if len(data) < off + 12:
        raise ArchiveFormatError(f"{path}: truncated header")
    num_slices, cols, rank = struct.unpack_from("<III", data, off)
    off += 12
    if num_slices < 1 or cols < 1 or rank < 1:
        raise ArchiveFormatError(f"{path}: invalid dimensions")

    def take(count, shape):
        nonlocal off
        nbytes = count * 8
        if len(data) < off + nbytes:
            raise ArchiveFormatError(f"{path}: truncated payload")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += nbytes
        return arr

    col_basis = take(cols * rank, (cols, rank))
    weights = take(rank, (rank,))
    cores = take(num_slices * rank * rank, (num_slices * rank, rank))
    bases = []
    for k in range(num_slices):
        if len(data) < off + 4:
            raise ArchiveFormatError(f"{path}: truncated at slice {k}")
        (rows,) = struct.unpack_from("<I", data, off)
        off += 4
        bases.append(take(rows * rank, (rows, rank)))
    if off != len(data):
        raise ArchiveFormatError(f"{path}: trailing bytes")
    return CompressedTensor(
        rank=rank, slice_bases=bases, col_basis=col_basis, weights=weights, cores=cores
    )
