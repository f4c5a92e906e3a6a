"""Alternating updates that never leave the compressed space.

After compression every slice is A_k F_k diag(E) D^T with A_k and D
column-orthonormal, so the whole fit runs on R x R blocks:

* Rotations: the Procrustes factor for slice k needs the truncated SVD of
  X_k V S_k H^T = A_k T_k with T_k = F_k (E D^T V) S_k H^T.  Since A_k has
  orthonormal columns, the R x R SVD T_k = Z_k Sig_k P_k^T gives the
  optimal Q_k = A_k Z_k P_k^T without forming it.

* The projected cores Y_k = Q_k^T X_k = (P_k Z_k^T F_k) E D^T are also
  never materialized: the three least-squares right-hand sides (MTTKRP
  products against each unfolding) collapse to small contractions of
  Theta_k = P_k Z_k^T F_k with E, D, and the current factors.

* Convergence is measured as e = sum_k ||Theta_k E D^T - H S_k V^T||_F^2,
  which equals the residual against the compressed slices because the
  Frobenius norm ignores the orthonormal left factors A_k Z_k.

Per-slice work runs on worker threads into per-slice slots; reductions
happen in ascending slice order, so results are identical for any thread
count.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .compress import CompressedTensor, compress
from .errors import NumericFailure
from .factors import FitTrace, Parafac2Factors, SolverOptions, initial_factors, push_col_norms
from .linalg import RsvdParams, gram, hadamard, pinv_small, truncated_svd
from .scheduler import parallel_slice_map, resolve_threads
from .tensor import IrregularTensor


@dataclass
class SliceRotation:
    """Per-slice Procrustes pieces: T_k = Z Sig P^T with Z, P orthogonal."""

    Z: np.ndarray
    P: np.ndarray
    Sig: np.ndarray


def update_rotations(comp: CompressedTensor, h, v, w, threads=None):
    """Solve every slice's orthogonal Procrustes problem in R x R space."""
    # E D^T V is shared by all slices.
    core_cols = comp.weights[:, None] * (comp.col_basis.T @ v)
    ht = h.T
    rank = comp.rank

    def rotate(k):
        t = (comp.core_block(k) @ core_cols) * w[k]
        t = t @ ht
        try:
            trip = truncated_svd(t, rank)
        except NumericFailure as exc:
            raise NumericFailure(str(exc), slice_index=k) from exc
        return SliceRotation(Z=trip.U, P=trip.V, Sig=trip.S)

    return parallel_slice_map(rotate, comp.num_slices, threads=threads)


def rotated_cores(comp: CompressedTensor, rotations, threads=None):
    """Stack of Theta_k = P_k Z_k^T F_k, shape (K, R, R).

    Theta_k E D^T is the projected core slice Y_k; every kernel below
    contracts against this stack instead of the J-sized cores.
    """
    def build(k):
        rot = rotations[k]
        return (rot.P @ rot.Z.T) @ comp.core_block(k)

    parts = parallel_slice_map(build, comp.num_slices, threads=threads)
    return np.stack(parts)


def mttkrp_mode1(comp, rotations, w, v, threads=None):
    """R x R right-hand side for the H solve: Y_(1) (W kr V).

    Column r reduces to (sum_k W[k, r] Theta_k) (E D^T V)[:, r].
    """
    theta = rotated_cores(comp, rotations, threads=threads)
    core_cols = comp.weights[:, None] * (comp.col_basis.T @ v)
    weighted = np.einsum("kr,kij->rij", w, theta)
    return np.einsum("rij,jr->ir", weighted, core_cols)


def mttkrp_mode2(comp, rotations, w, h, threads=None):
    """J x R right-hand side for the V solve: Y_(2) (W kr H).

    Column r reduces to D E sum_k W[k, r] Theta_k^T H[:, r].
    """
    theta = rotated_cores(comp, rotations, threads=threads)
    projected = np.einsum("kba,br->kar", theta, h)
    summed = np.einsum("kr,kar->ar", w, projected)
    return comp.col_basis @ (comp.weights[:, None] * summed)


def mttkrp_mode3(comp, rotations, v, h, threads=None):
    """K x R right-hand side for the W solve: Y_(3) (V kr H).

    Entry (k, r) is the bilinear form H[:, r]^T Theta_k (E D^T V)[:, r].
    """
    theta = rotated_cores(comp, rotations, threads=threads)
    core_cols = comp.weights[:, None] * (comp.col_basis.T @ v)
    half = np.einsum("kij,jr->kir", theta, core_cols)
    return np.einsum("ir,kir->kr", h, half)


def update_factors(comp, rotations, h, v, w, normalize=True, threads=None):
    """One alternating sweep over H, V, W in compressed space.

    Each right-hand side is rebuilt after the factors it depends on change,
    so the sweep matches a Gauss-Seidel pass over the projected cores.
    """
    g1 = mttkrp_mode1(comp, rotations, w, v, threads=threads)
    h = g1 @ pinv_small(hadamard(gram(w), gram(v)))
    if normalize:
        h, w = push_col_norms(h, w)
    g2 = mttkrp_mode2(comp, rotations, w, h, threads=threads)
    v = g2 @ pinv_small(hadamard(gram(w), gram(h)))
    if normalize:
        v, w = push_col_norms(v, w)
    g3 = mttkrp_mode3(comp, rotations, v, h, threads=threads)
    w = g3 @ pinv_small(hadamard(gram(v), gram(h)))
    return h, v, w


def convergence_metric(comp, rotations, h, v, w, threads=None):
    """e = sum_k ||Theta_k E D^T - H S_k V^T||_F^2.

    Works on R x J buffers per slice (never I_k rows) and reduces the
    per-slice squares in ascending slice order.
    """
    weighted_basis = comp.weights[:, None] * comp.col_basis.T
    vt = v.T

    def residual(k):
        rot = rotations[k]
        buf = ((rot.P @ rot.Z.T) @ comp.core_block(k)) @ weighted_basis
        buf -= (h * w[k]) @ vt
        return float(np.dot(buf.ravel(), buf.ravel()))

    parts = parallel_slice_map(residual, comp.num_slices, threads=threads)
    return float(np.add.reduce(np.asarray(parts)))


def fit_dpar2(tensor: IrregularTensor, rank, opts: SolverOptions | None = None):
    """Compress once, then alternate rotations and factor sweeps in R x R space.

    Returns ``(factors, trace)``; the trace records the compressed residual
    e and wall time per iteration plus the one-off compression time.  Stops
    when e's relative change falls below ``opts.tol`` or at ``max_iters``.
    """
    opts = opts or SolverOptions()
    if opts.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    threads = resolve_threads(opts.threads)
    normalize = bool(opts.normalize) if opts.normalize is not None else True

    started = time.perf_counter()
    comp = compress(tensor, rank, rsvd=RsvdParams(rank=rank, seed=opts.seed), threads=threads)
    trace = FitTrace(preprocess_seconds=time.perf_counter() - started,
                     compressed_float_count=comp.float_count())

    h, v, w = initial_factors(tensor.num_cols, tensor.num_slices, rank, opts.seed)
    rotations = None
    prev = None
    for _ in range(opts.max_iters):
        tick = time.perf_counter()
        rotations = update_rotations(comp, h, v, w, threads=threads)
        h, v, w = update_factors(comp, rotations, h, v, w, normalize=normalize, threads=threads)
        e = convergence_metric(comp, rotations, h, v, w, threads=threads)
        trace.objective.append(e)
        trace.seconds.append(time.perf_counter() - tick)
        if prev is not None:
            if prev == 0.0 or abs(prev - e) <= opts.tol * prev:
                trace.converged = True
                break
        prev = e

    q = parallel_slice_map(
        lambda k: comp.slice_bases[k] @ (rotations[k].Z @ rotations[k].P.T),
        comp.num_slices, threads=threads,
    )
    return Parafac2Factors(H=h, V=v, W=w, Q=q), trace
