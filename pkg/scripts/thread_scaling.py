#!/usr/bin/env python3
"""Measure compression wall time against worker-thread count.

The per-slice sketches are embarrassingly parallel, so on a multi-core host
the compression phase should shrink roughly linearly until the memory bus
saturates.  Results are printed as a table and optionally written to CSV.

Example:
    python scripts/thread_scaling.py --size 2000x500x200 --rank 10 \
        --threads 1,2,4,8 --repeats 3
"""
import argparse
import os
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dpar2 import SyntheticSpec, compress, generate  # noqa: E402
from dpar2.factors import write_csv_rows  # noqa: E402
from dpar2.tensor import MODE_UNIFORM  # noqa: E402


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", default="2000x500x200", help="IxJxK")
    parser.add_argument("--rank", type=int, default=10)
    parser.add_argument("--threads", default="1,2,4,8")
    parser.add_argument("--repeats", type=int, default=3,
                        help="keep the best of this many timings per count")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    rows_i, cols_j, slices_k = (int(d) for d in args.size.replace("x", ",").split(","))
    counts = [int(t) for t in args.threads.split(",") if t.strip()]
    tensor = generate(SyntheticSpec(rows=rows_i, cols=cols_j, num_slices=slices_k,
                                    mode=MODE_UNIFORM, seed=args.seed))
    print(f"tensor I<={rows_i} J={cols_j} K={slices_k}, rank {args.rank}, "
          f"host has {os.cpu_count()} cores")

    baseline = None
    rows = []
    reference = None
    for n in counts:
        best = float("inf")
        for _ in range(max(args.repeats, 1)):
            started = time.perf_counter()
            comp = compress(tensor, args.rank, threads=n)
            best = min(best, time.perf_counter() - started)
        if reference is None:
            reference = comp
            baseline = best
        else:
            # scaling must never change the numbers, only the wall time
            assert comp.cores.tobytes() == reference.cores.tobytes()
        print(f"  T={n:2d}  {best:7.3f}s  {baseline / best:5.2f}x vs T=1")
        rows.append([rows_i, cols_j, slices_k, args.rank, n, best, baseline / best])
    if args.out:
        write_csv_rows(args.out, ["I", "J", "K", "rank", "threads",
                                  "best_seconds", "speedup_vs_t1"], rows)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
