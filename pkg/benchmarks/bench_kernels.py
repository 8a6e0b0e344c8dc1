#!/usr/bin/env python3
"""Micro-benchmark: pure-Python kernels vs the compiled extension.

Times each hot kernel on a representative workload and prints per-call
medians plus the compiled-over-python speedup. Run from a checkout with
the package installed:

    python benchmarks/bench_kernels.py [--repeats 7] [--scale 1.0]
"""

import argparse
import statistics
import time

import numpy as np

from evsel._kernels import pyref
from evsel.prng import Stream

try:
    from evsel._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeats, min_time=0.05):
    """Median seconds per call, auto-scaling the inner loop."""
    loops = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        dt = time.perf_counter() - t0
        if dt >= min_time or loops >= 1 << 20:
            break
        loops *= 2
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn()
        samples.append((time.perf_counter() - t0) / loops)
    return statistics.median(samples)


def workloads(scale):
    rng = Stream(123)
    n_rows = max(8, int(2048 * scale))
    nv = max(16, int(576 * scale))
    d = max(32, int(2048 * scale))
    g = max(6, int(24 * scale ** 0.5))
    n_kb = max(64, int(10_000 * scale))
    e = 64

    rows = np.asarray(rng.floats(n_rows, nv))
    hid = (np.asarray(rng.floats(nv, d)) * 2 - 1).astype(np.float32)
    vals = np.asarray(rng.floats(nv))
    grid = np.asarray(rng.floats(g, g))
    mask = np.asarray(rng.floats(g, g)) > 0.55
    mask[g // 2, g // 2] = True
    emb = (np.asarray(rng.floats(n_kb, e)) * 2 - 1).astype(np.float32)
    query = np.asarray(rng.floats(e)) * 2 - 1

    return [
        ("mean_over_rows", f"[{n_rows},{nv}]",
         lambda k: k.mean_over_rows(rows)),
        ("sink_scores_layer", f"[{nv},{d}] dims=2",
         lambda k: k.sink_scores_layer(hid, (1, d - 2))),
        ("percentile_linear", f"n={nv} q=25",
         lambda k: k.percentile_linear(vals, 25.0)),
        ("weighted_moments", f"[{g},{g}]",
         lambda k: k.weighted_moments(grid)),
        ("binary_closing", f"[{g},{g}] k=3",
         lambda k: k.binary_closing(mask, 3)),
        ("largest_component_box", f"[{g},{g}]",
         lambda k: k.largest_component_box(mask, g // 2, g // 2)),
        ("topn_inner", f"[{n_kb},{e}] n=3",
         lambda k: k.topn_inner(emb, query, 3)),
    ]


def fmt(seconds):
    if seconds >= 1e-3:
        return f"{seconds * 1e3:8.3f} ms"
    return f"{seconds * 1e6:8.3f} us"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--scale", type=float, default=1.0,
                    help="workload size multiplier")
    args = ap.parse_args()

    if _core is None:
        print("compiled extension not available; timing python only\n")

    header = f"{'kernel':<24}{'workload':<18}{'python':>12}"
    if _core is not None:
        header += f"{'compiled':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, desc, call in workloads(args.scale):
        t_py = timeit(lambda: call(pyref), args.repeats)
        line = f"{name:<24}{desc:<18}{fmt(t_py):>12}"
        if _core is not None:
            t_c = timeit(lambda: call(_core), args.repeats)
            line += f"{fmt(t_c):>12}{t_py / t_c:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
