"""Shared factor containers, solver options, and factor-set disk I/O.

Both solvers produce the same model: X_k ~ U_k S_k V^T with U_k = Q_k H,
where Q_k has orthonormal columns, H is a square R x R matrix shared across
slices, S_k = diag(W[k, :]) and V is the shared column factor.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArchiveFormatError, ShapeMismatchError

_MASK64 = (1 << 64) - 1


@dataclass
class SolverOptions:
    """Knobs shared by both solvers.

    ``normalize=None`` keeps each solver's own default (the compressed
    solver rescales factor columns to unit norm each sweep, the baseline
    does not).  ``threads=None`` defers to DPAR2_THREADS or the CPU count.
    """

    max_iters: int = 32
    tol: float = 1e-6
    seed: int = 0
    threads: int | None = None
    normalize: bool | None = None


@dataclass
class FitTrace:
    """Per-iteration objective values and wall times for one fit."""

    objective: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    preprocess_seconds: float = 0.0
    converged: bool = False
    compressed_float_count: int | None = None

    @property
    def iterations(self):
        return len(self.objective)


@dataclass
class Parafac2Factors:
    """Fitted factors H (R x R), V (J x R), W (K x R), and per-slice Q_k."""

    H: np.ndarray
    V: np.ndarray
    W: np.ndarray
    Q: list

    @property
    def rank(self):
        return self.H.shape[1]

    @property
    def num_slices(self):
        return len(self.Q)

    def slice_factor(self, k):
        """U_k = Q_k H, the left factor of slice k."""
        return self.Q[k] @ self.H

    def reconstruct_slice(self, k):
        """Model slice (Q_k (H S_k)) V^T."""
        return (self.Q[k] @ (self.H * self.W[k])) @ self.V.T


def initial_factors(num_cols, num_slices, rank, seed=0):
    """Deterministic starting point: H = I, V = leading identity columns
    (seeded Gaussian fallback when the column count is below the rank),
    W = ones so every S_k starts as the identity."""
    h = np.eye(rank)
    if num_cols >= rank:
        v = np.eye(num_cols, rank)
    else:
        rng = np.random.Generator(np.random.PCG64(seed & _MASK64))
        v = rng.standard_normal((num_cols, rank))
    w = np.ones((num_slices, rank))
    return h, v, w


def push_col_norms(a, b):
    """Rescale ``a``'s columns to unit 2-norm, multiplying the norms into
    the matching columns of ``b`` so products over both are unchanged.
    Columns with norm below 1e-300 are left alone (factor 1)."""
    norms = np.linalg.norm(a, axis=0)
    safe = np.where(norms < 1e-300, 1.0, norms)
    return a / safe, b * safe


def _write_matrix(path, arr):
    np.savetxt(path, np.atleast_2d(arr), delimiter=",", fmt="%.17g")


def _read_matrix(path):
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def save_factors(factors: Parafac2Factors, outdir, manifest_extra=None):
    """Write H/V/W and every U_k as CSV plus a manifest.json.

    Files are deterministic: the same factors always produce the same bytes.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_matrix(outdir / "H.csv", factors.H)
    _write_matrix(outdir / "V.csv", factors.V)
    _write_matrix(outdir / "W.csv", factors.W)
    for k in range(factors.num_slices):
        _write_matrix(outdir / f"U_{k:04d}.csv", factors.slice_factor(k))
    manifest = {
        "rank": int(factors.rank),
        "num_slices": int(factors.num_slices),
        "num_cols": int(factors.V.shape[0]),
        "row_counts": [int(q.shape[0]) for q in factors.Q],
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class FactorSet:
    """Factors reloaded from disk; U is the list of per-slice left factors."""

    H: np.ndarray
    V: np.ndarray
    W: np.ndarray
    U: list
    manifest: dict


def load_factors(path):
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise ArchiveFormatError(f"{path}: missing manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    h = _read_matrix(path / "H.csv")
    v = _read_matrix(path / "V.csv")
    w = _read_matrix(path / "W.csv")
    u_files = sorted(path.glob("U_*.csv"))
    if len(u_files) != manifest.get("num_slices", len(u_files)):
        raise ArchiveFormatError(
            f"{path}: manifest lists {manifest.get('num_slices')} slices, found {len(u_files)} U files"
        )
    u = [_read_matrix(f) for f in u_files]
    if not u:
        raise ArchiveFormatError(f"{path}: no U_*.csv factor files")
    rank = h.shape[1]
    for k, mat in enumerate(u):
        if mat.shape[1] != rank:
            raise ShapeMismatchError(f"U file {k} has {mat.shape[1]} columns, expected {rank}")
    return FactorSet(H=h, V=v, W=w, U=u, manifest=manifest)


def write_csv_rows(path, header, rows):
    """Small CSV writer used by reports; floats are emitted with repr
    precision so equal values always serialize to equal bytes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(c) for c in row])


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value
