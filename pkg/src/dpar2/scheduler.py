"""Work partitioning and deterministic thread-parallel slice loops.

Slices of an irregular tensor have unequal row counts, so naive contiguous
chunking can leave one worker with most of the rows.  ``greedy_partition``
balances load with longest-processing-time-first assignment.  All parallel
loops write results into per-slice slots and reduce in ascending slice
order afterwards, so the outcome is bit-identical for any thread count.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field


@dataclass
class PartitionPlan:
    """Assignment of slice indices to worker sets with their row loads."""

    sets: list = field(default_factory=list)
    loads: list = field(default_factory=list)

    @property
    def workers(self):
        return len(self.sets)


def greedy_partition(row_counts, workers):
    """Longest-first greedy assignment of slices to ``workers`` sets.

    Slices are visited in descending row count (ties by ascending slice
    index) and each goes to the currently lightest set (ties by lowest set
    index).  The resulting load spread never exceeds the largest single
    slice: ``max(loads) - min(loads) <= max(row_counts)``.
    """
    counts = list(row_counts)
    if len(counts) < 1:
        raise ValueError("need at least one slice")
    if workers < 1:
        raise ValueError("need at least one worker")
    if any(c < 1 for c in counts):
        raise ValueError("row counts must be positive")
    order = sorted(range(len(counts)), key=lambda k: (-counts[k], k))
    sets = [[] for _ in range(workers)]
    loads = [0] * workers
    for k in order:
        t = min(range(workers), key=loads.__getitem__)
        sets[t].append(k)
        loads[t] += counts[k]
    return PartitionPlan(sets=sets, loads=loads)


def contiguous_chunks(n, parts):
    """Split range(n) into at most ``parts`` contiguous runs of near-equal length."""
    if parts < 1:
        raise ValueError("need at least one part")
    parts = min(parts, n) if n > 0 else 1
    base, extra = divmod(n, parts)
    chunks = []
    start = 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        chunks.append(list(range(start, start + size)))
        start += size
    return chunks


def resolve_threads(threads=None):
    """Worker count: explicit argument, else DPAR2_THREADS, else cpu count."""
    if threads is not None:
        t = int(threads)
        if t < 1:
            raise ValueError("threads must be >= 1")
        return t
    env = os.environ.get("DPAR2_THREADS")
    if env:
        t = int(env)
        if t < 1:
            raise ValueError(f"DPAR2_THREADS must be >= 1, got {env!r}")
        return t
    return os.cpu_count() or 1


def parallel_slice_map(fn, num_slices, threads=None, groups=None):
    """Evaluate ``fn(k)`` for ``k in range(num_slices)`` across worker threads.

    ``groups`` (a list of index lists, e.g. ``PartitionPlan.sets``) controls
    which worker owns which slices; by default slices are chunked
    contiguously.  Each result lands in its own slot, so the returned list
    is in ascending slice order regardless of scheduling.  The first failing
    slice aborts the batch and its exception is re-raised.
    """
    threads = resolve_threads(threads)
    if groups is None:
        groups = contiguous_chunks(num_slices, threads)
    groups = [g for g in groups if g]
    results = [None] * num_slices
    failures = []
    stop = threading.Event()

    def run(group):
        for k in group:
            if stop.is_set():
                return
            try:
                results[k] = fn(k)
            except Exception as exc:  # noqa: BLE001 - propagated below
                failures.append((k, exc))
                stop.set()
                return

    if threads <= 1 or len(groups) <= 1:
        for group in groups:
            run(group)
    else:
        with ThreadPoolExecutor(max_workers=min(threads, len(groups))) as pool:
            list(pool.map(run, groups))
    if failures:
        failures.sort(key=lambda pair: pair[0])
        raise failures[0][1]
    return results
