"""Acceptance gate: one test per shipping criterion, each printing PASS/FAIL.

Every test exercises the public API end to end at the advertised tolerance.
Criterion 10 (thread scaling) is reported but not gated because it depends
on the host's core count.
"""
import time

import numpy as np
import pytest

from dpar2 import cli
from dpar2.analysis import RwrParams, SimilarityGraph, fitness, knn, rwr
from dpar2.baseline import fit_baseline, unfold_mode1, unfold_mode2, unfold_mode3
from dpar2.compress import compress, reconstruct_slice
from dpar2.factors import SolverOptions
from dpar2.linalg import khatri_rao
from dpar2.scheduler import greedy_partition
from dpar2.solver import (
    convergence_metric,
    fit_dpar2,
    mttkrp_mode1,
    mttkrp_mode2,
    mttkrp_mode3,
    rotated_cores,
    update_rotations,
)
from dpar2.tensor import MODE_PLANTED, MODE_UNIFORM, IrregularTensor, SyntheticSpec, generate


def report(num, ok, detail):
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")


def random_instance(rng):
    """Small irregular tensor plus a compatible random factor state."""
    rank = int(rng.integers(1, 5))
    cols = int(rng.integers(4, 17))
    num = int(rng.integers(1, 13))
    counts = rng.integers(rank, 21, size=num)
    t = IrregularTensor([rng.random((int(c), cols)) for c in counts])
    h = rng.standard_normal((rank, rank))
    v = rng.standard_normal((cols, rank))
    w = rng.standard_normal((num, rank))
    return t, rank, h, v, w


def test_c01_contraction_kernels_match_materialized_mttkrp():
    rng = np.random.Generator(np.random.PCG64(101))
    started = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        t, rank, h, v, w = random_instance(rng)
        comp = compress(t, rank)
        rots = update_rotations(comp, h, v, w)
        theta = rotated_cores(comp, rots)
        scaled = comp.weights[:, None] * comp.col_basis.T
        cores = [theta[k] @ scaled for k in range(comp.num_slices)]
        pairs = (
            (mttkrp_mode1(comp, rots, w, v), unfold_mode1(cores) @ khatri_rao(w, v)),
            (mttkrp_mode2(comp, rots, w, h), unfold_mode2(cores) @ khatri_rao(w, h)),
            (mttkrp_mode3(comp, rots, v, h), unfold_mode3(cores) @ khatri_rao(v, h)),
        )
        for got, want in pairs:
            denom = max(np.linalg.norm(want), 1e-30)
            worst = max(worst, np.linalg.norm(got - want) / denom)
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-11 and elapsed < 10.0
    report(1, ok, f"kernel vs materialized max rel err {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-11
    assert elapsed < 10.0


def test_c02_convergence_metric_equals_materialized_residual():
    rng = np.random.Generator(np.random.PCG64(102))
    worst = 0.0
    for _ in range(50):
        t, rank, h, v, w = random_instance(rng)
        comp = compress(t, rank)
        rots = update_rotations(comp, h, v, w)
        e = convergence_metric(comp, rots, h, v, w)
        direct = 0.0
        for k in range(comp.num_slices):
            q = comp.slice_bases[k] @ (rots[k].Z @ rots[k].P.T)
            resid = reconstruct_slice(comp, k) - (q @ (h * w[k])) @ v.T
            direct += float(np.dot(resid.ravel(), resid.ravel()))
        worst = max(worst, abs(e - direct) / max(direct, 1e-30))
    ok = worst <= 1e-9
    report(2, ok, f"compressed e vs full residual max rel err {worst:.2e}")
    assert worst <= 1e-9


def test_c03_planted_noiseless_recovery_both_solvers():
    t = generate(SyntheticSpec(rows=100, cols=50, num_slices=40, mode=MODE_PLANTED,
                               true_rank=5, seed=0))
    opts = SolverOptions(max_iters=32, tol=0.0)
    fast, _ = fit_dpar2(t, 5, opts)
    slow, _ = fit_baseline(t, 5, opts)
    fit_fast = fitness(t, fast)
    fit_slow = fitness(t, slow)
    ok = fit_fast >= 0.999 and fit_slow >= 0.999
    report(3, ok, f"fitness compressed={fit_fast:.6f} baseline={fit_slow:.6f}")
    assert fit_fast >= 0.999
    assert fit_slow >= 0.999


def test_c04_fitness_parity_under_noise():
    gaps = []
    for seed in range(10):
        t = generate(SyntheticSpec(rows=40, cols=20, num_slices=10, mode=MODE_PLANTED,
                                   true_rank=3, noise_level=0.1, seed=seed))
        opts = SolverOptions(max_iters=16, tol=0.0)
        fast, _ = fit_dpar2(t, 3, opts)
        slow, _ = fit_baseline(t, 3, opts)
        gaps.append(abs(fitness(t, fast) - fitness(t, slow)))
    worst = max(gaps)
    ok = worst <= 0.01
    report(4, ok, f"max |fitness gap| {worst:.2e} over 10 noisy instances")
    assert worst <= 0.01


def test_c05_per_iteration_speedup_at_scale():
    started = time.perf_counter()
    t = generate(SyntheticSpec(rows=2000, cols=500, num_slices=100,
                               mode=MODE_UNIFORM, seed=0))
    fast_factors, fast_trace = fit_dpar2(t, 10, SolverOptions(max_iters=5, tol=0.0))
    slow_factors, slow_trace = fit_baseline(t, 10, SolverOptions(max_iters=2, tol=0.0))
    fast_iter = float(np.mean(fast_trace.seconds))
    slow_iter = float(np.mean(slow_trace.seconds))
    total = time.perf_counter() - started
    ok = fast_iter <= 0.5 * slow_iter and total < 300.0
    report(5, ok, f"per-iteration {fast_iter * 1e3:.1f}ms vs {slow_iter * 1e3:.1f}ms "
                  f"({slow_iter / fast_iter:.0f}x), wall {total:.0f}s")
    assert fast_iter <= 0.5 * slow_iter
    assert total < 300.0


def test_c06_compressed_size_formula_and_ratio():
    rng = np.random.Generator(np.random.PCG64(106))
    exact = True
    for _ in range(6):
        rank = int(rng.integers(1, 5))
        cols = int(rng.integers(rank, 30))
        counts = rng.integers(rank, 40, size=int(rng.integers(1, 8)))
        t = IrregularTensor([rng.random((int(c), cols)) for c in counts])
        comp = compress(t, rank)
        want = (sum(int(c) * rank for c in counts)
                + t.num_slices * rank * rank + cols * rank + rank)
        exact = exact and comp.float_count() == want
    big = generate(SyntheticSpec(rows=300, cols=400, num_slices=20,
                                 mode=MODE_UNIFORM, seed=1))
    comp = compress(big, 5)
    dense = sum(c * big.num_cols for c in big.row_counts)
    ratio = dense / comp.float_count()
    ok = exact and ratio > 10.0
    report(6, ok, f"float-count formula exact={exact}, compression ratio {ratio:.1f}x")
    assert exact
    assert ratio > 10.0


def test_c07_objective_monotone_over_random_starts():
    rng = np.random.Generator(np.random.PCG64(107))
    worst = -np.inf
    for case in range(50):
        t, rank, _, _, _ = random_instance(rng)
        opts = SolverOptions(max_iters=8, tol=0.0, seed=int(rng.integers(1 << 30)))
        _, trace = fit_dpar2(t, rank, opts)
        obj = np.asarray(trace.objective)
        slack = 1e-9 * max(obj[0], 1.0)
        rise = float(np.diff(obj).max()) if obj.size > 1 else -np.inf
        worst = max(worst, rise - slack)
        assert (np.diff(obj) <= slack).all(), f"case {case}: {obj}"
    ok = worst <= 0.0
    report(7, ok, f"max slack-adjusted objective rise {worst:.2e} over 50 starts")


def test_c08_orthogonality_invariants():
    rng = np.random.Generator(np.random.PCG64(108))
    worst_gram = 0.0
    worst_cross = 0.0
    for _ in range(10):
        t, rank, h, v, w = random_instance(rng)
        comp = compress(t, rank)
        eye = np.eye(rank)
        for a in comp.slice_bases:
            worst_gram = max(worst_gram, np.abs(a.T @ a - eye).max())
        d = comp.col_basis
        worst_gram = max(worst_gram, np.abs(d.T @ d - eye).max())
        f = comp.core_stack().reshape(-1, rank)
        worst_gram = max(worst_gram, np.abs(f.T @ f - eye).max())
        for rot in update_rotations(comp, h, v, w):
            worst_gram = max(worst_gram, np.abs(rot.Z.T @ rot.Z - eye).max())
            worst_gram = max(worst_gram, np.abs(rot.P.T @ rot.P - eye).max())
        factors, _ = fit_dpar2(t, rank, SolverOptions(max_iters=4, tol=0.0))
        want = factors.H.T @ factors.H
        for k in range(t.num_slices):
            worst_gram = max(worst_gram,
                             np.abs(factors.Q[k].T @ factors.Q[k] - eye).max())
            u = factors.slice_factor(k)
            worst_cross = max(worst_cross, np.abs(u.T @ u - want).max())
    ok = worst_gram <= 1e-8 and worst_cross <= 1e-8
    report(8, ok, f"max Gram deviation {worst_gram:.2e}, "
                  f"max U_k^T U_k drift {worst_cross:.2e}")
    assert worst_gram <= 1e-8
    assert worst_cross <= 1e-8


def test_c09_determinism_and_partition_bound(tmp_path):
    archive = tmp_path / "det.irt"
    assert cli.main(["generate", "--I", "30", "--J", "12", "--K", "8",
                     "--mode", "planted", "--rank", "3", "--noise", "0.2",
                     "--seed", "5", "--out", str(archive)]) == 0
    dirs = []
    for n in (1, 2, 8):
        outdir = tmp_path / f"t{n}"
        assert cli.main(["decompose", str(archive), "--rank", "3", "--tol", "0",
                         "--threads", str(n), "--out-factors", str(outdir)]) == 0
        dirs.append(outdir)
    names = sorted(p.name for p in dirs[0].iterdir() if p.name != "manifest.json")
    identical = all(
        (d / name).read_bytes() == (dirs[0] / name).read_bytes()
        for d in dirs[1:] for name in names
    )

    rng = np.random.Generator(np.random.PCG64(109))
    bound_holds = True
    for _ in range(1000):
        counts = [int(c) for c in rng.integers(1, 101, size=int(rng.integers(1, 51)))]
        plan = greedy_partition(counts, int(rng.integers(1, 9)))
        spread = max(plan.loads) - min(plan.loads)
        bound_holds = bound_holds and spread <= max(counts)
    ok = identical and bound_holds
    report(9, ok, f"factor bytes identical for 1/2/8 threads={identical}, "
                  f"greedy spread bound on 1000 vectors={bound_holds}")
    assert identical
    assert bound_holds


def test_c10_compression_thread_scaling_reported():
    # soft criterion: measured and printed, never gated, because wall-clock
    # scaling depends entirely on how many cores the host exposes
    t = generate(SyntheticSpec(rows=2000, cols=500, num_slices=200,
                               mode=MODE_UNIFORM, seed=2))
    times = {}
    for n in (1, 4):
        started = time.perf_counter()
        compress(t, 10, threads=n)
        times[n] = time.perf_counter() - started
    import os
    ratio = times[4] / times[1]
    target_met = ratio <= 0.45
    report(10, True, f"T=4 compression at {ratio:.2f}x the T=1 time "
                     f"(target <=0.45x, host has {os.cpu_count()} cores, "
                     f"soft criterion: {'met' if target_met else 'not met, reported only'})")


def test_c11a_rwr_two_node_pinned_values():
    graph = SimilarityGraph(adjacency=np.array([[0.0, 1.0], [1.0, 0.0]]))
    out = rwr(graph, RwrParams(restart=0.15, max_iters=500, stop_tol=None,
                               query=np.array([1.0, 0.0])))
    pinned = np.array([0.575, 0.425])
    err = float(np.abs(out - pinned).max())
    ok = err <= 1e-9
    report("11a", ok, f"2-node walk gave {out.tolist()}, pinned {pinned.tolist()}, "
                      f"max err {err:.2e}")
    assert err <= 1e-9, (
        f"restart walk converged to {out.tolist()}; the pinned pair "
        f"[0.575, 0.425] is not a fixed point of r = 0.85*A~^T r + 0.15*q "
        "on the symmetric 2-node graph (that target satisfies a half-lazy "
        "update instead), so this check cannot pass with the documented rule"
    )


def test_c11b_rwr_simplex_preserved_each_iteration():
    rng = np.random.Generator(np.random.PCG64(111))
    adj = rng.random((9, 9)) + 0.05
    adj = (adj + adj.T) / 2
    np.fill_diagonal(adj, 0.0)
    graph = SimilarityGraph(adjacency=adj)
    q = np.zeros(9)
    q[4] = 1.0
    worst = 0.0
    for iters in range(1, 60):
        out = rwr(graph, RwrParams(max_iters=iters, stop_tol=None, query=q))
        worst = max(worst, abs(float(out.sum()) - 1.0))
        assert (out >= 0).all()
    ok = worst <= 1e-12
    report("11b", ok, f"max |sum - 1| {worst:.2e} over every iteration count")
    assert worst <= 1e-12


def test_c11c_knn_matches_exhaustive_sort():
    rng = np.random.Generator(np.random.PCG64(112))
    agree = True
    for _ in range(100):
        n = int(rng.integers(2, 40))
        scores = rng.random(n)
        target = int(rng.integers(n))
        k = int(rng.integers(0, n))
        got = knn(scores, target, k)
        ranked = sorted((i for i in range(n) if i != target),
                        key=lambda i: (-scores[i], i))
        agree = agree and got == ranked[:k]
    report("11c", agree, "k-NN equals exhaustive sort on 100 random score vectors")
    assert agree
