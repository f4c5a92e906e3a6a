"""Factor quality and factor-space exploration.

``fitness`` scores a fitted model against the raw tensor.  The remaining
helpers treat the per-slice left factors U_k as points: a Gaussian-kernel
similarity graph over slices, k-nearest-neighbour queries on it, random
walk with restart for graph-aware ranking, and plain Pearson correlations
between the rows of V for inspecting feature structure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, IsolatedNodeError, ShapeMismatchError
from .factors import Parafac2Factors
from .scheduler import parallel_slice_map
from .tensor import IrregularTensor

DEFAULT_GAMMA = 0.01


def fitness(tensor: IrregularTensor, factors: Parafac2Factors, threads=None):
    """1 - sum_k ||X_k - Xhat_k||_F^2 / sum_k ||X_k||_F^2.

    1 is a perfect fit; 0 means no better than predicting zero.  Raises on
    an all-zero tensor, where the ratio is undefined.
    """
    if factors.num_slices != tensor.num_slices:
        raise ShapeMismatchError(
            f"factors cover {factors.num_slices} slices, tensor has {tensor.num_slices}"
        )
    vt = factors.V.T

    def pair(k):
        x = tensor.slices[k]
        diff = x - (factors.Q[k] @ (factors.H * factors.W[k])) @ vt
        return float(np.dot(x.ravel(), x.ravel())), float(np.dot(diff.ravel(), diff.ravel()))

    parts = parallel_slice_map(pair, tensor.num_slices, threads=threads)
    total = float(np.add.reduce(np.asarray([p[0] for p in parts])))
    resid = float(np.add.reduce(np.asarray([p[1] for p in parts])))
    if total == 0.0:
        raise DegenerateInputError("fitness undefined for an all-zero tensor")
    return 1.0 - resid / total


def similarity(u_a, u_b, gamma=DEFAULT_GAMMA):
    """exp(-gamma ||U_a - U_b||_F^2); 1 iff equal, in (0, 1] always."""
    u_a = np.asarray(u_a, dtype=np.float64)
    u_b = np.asarray(u_b, dtype=np.float64)
    if u_a.shape != u_b.shape:
        raise ShapeMismatchError(
            f"cannot compare factors of shapes {u_a.shape} and {u_b.shape}"
        )
    diff = u_a - u_b
    return float(np.exp(-gamma * np.dot(diff.ravel(), diff.ravel())))


@dataclass
class SimilarityGraph:
    """Dense symmetric adjacency over slices; zero diagonal, entries in [0, 1]."""

    adjacency: np.ndarray
    gamma: float = DEFAULT_GAMMA

    @property
    def num_nodes(self):
        return self.adjacency.shape[0]


def build_similarity_graph(u_list, gamma=DEFAULT_GAMMA, threads=None):
    """Pairwise Gaussian-kernel similarities between same-shape factors.

    All factors must share one shape; comparing slices with different row
    counts is undefined and raises naming the offending pair.  Rows are
    filled in parallel, upper triangle first, then mirrored.
    """
    if len(u_list) < 1:
        raise ShapeMismatchError("need at least one factor")
    mats = [np.asarray(u, dtype=np.float64) for u in u_list]
    shape = mats[0].shape
    for i, m in enumerate(mats):
        if m.shape != shape:
            raise ShapeMismatchError(
                f"factor 0 has shape {shape} but factor {i} has {m.shape}; "
                "similarity across different slice shapes is undefined"
            )
    n = len(mats)

    def row(i):
        out = np.zeros(n)
        for j in range(i + 1, n):
            out[j] = similarity(mats[i], mats[j], gamma)
        return out

    rows = parallel_slice_map(row, n, threads=threads)
    upper = np.stack(rows)
    return SimilarityGraph(adjacency=upper + upper.T, gamma=gamma)


def knn(scores, target, k):
    """Indices of the k highest-scoring nodes other than ``target``.

    ``scores`` is either a 1-D score vector or a SimilarityGraph (its
    target row is used).  Ties break toward the lower index.
    """
    if isinstance(scores, SimilarityGraph):
        scores = scores.adjacency[target]
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if not 0 <= target < n:
        raise IndexError(f"target {target} out of range [0, {n})")
    if k < 0 or k > n - 1:
        raise ValueError(f"k must be in [0, {n - 1}], got {k}")
    order = np.lexsort((np.arange(n), -scores))
    ranked = [int(i) for i in order if i != target]
    return ranked[:k]


@dataclass
class RwrParams:
    """Random-walk-with-restart settings.

    ``query`` must be a probability vector (one-hot for single-node
    queries).  ``stop_tol=None`` disables early stopping so exactly
    ``max_iters`` power steps run; otherwise iteration ends once the L1
    change falls below the tolerance.
    """

    restart: float = 0.15
    max_iters: int = 100
    stop_tol: float | None = 1e-10
    query: np.ndarray = field(default_factory=lambda: np.array([1.0]))


def rwr(graph: SimilarityGraph, params: RwrParams):
    """Stationary scores of r <- (1 - c) A~^T r + c q, started at r = q.

    A~ is the row-normalized adjacency; a zero row (isolated node) makes
    normalization impossible and raises.  Row-stochastic A~ keeps every
    iterate on the probability simplex.
    """
    a = np.asarray(graph.adjacency, dtype=np.float64)
    n = a.shape[0]
    c = params.restart
    if not 0.0 < c < 1.0:
        raise ValueError(f"restart must be in (0, 1), got {c}")
    q = np.asarray(params.query, dtype=np.float64)
    if q.shape != (n,):
        raise ShapeMismatchError(f"query has shape {q.shape}, graph has {n} nodes")
    if (q < 0).any() or abs(float(q.sum()) - 1.0) > 1e-12:
        raise ValueError("query must be a probability vector")
    if n == 1:
        return q.copy()
    row_sums = a.sum(axis=1)
    dead = np.flatnonzero(row_sums == 0.0)
    if dead.size:
        raise IsolatedNodeError(f"node {int(dead[0])} has zero total similarity")
    walk = (a / row_sums[:, None]).T
    r = q.copy()
    for _ in range(params.max_iters):
        r_next = (1.0 - c) * (walk @ r) + c * q
        if params.stop_tol is not None and float(np.abs(r_next - r).sum()) < params.stop_tol:
            return r_next
        r = r_next
    return r


def pcc_matrix(v):
    """Pearson correlations between the rows of ``v`` (feature-by-feature)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 2:
        raise ShapeMismatchError("need a 2-D matrix with at least two rows")
    return np.corrcoef(v)
