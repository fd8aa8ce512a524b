#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the fused top-n inner-product scan and the batch joint-angle score
over synthetic corpora, and checks that both backends return identical
results while timing them.

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --sizes 1000,100000 --dims 64,768 --n 10
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from raggate import kernels


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_topk(backends, sizes, dims, n, repeat, rng):
    print(f"\ntopk_ip (n={n}, best of {repeat})")
    header = f"{'size':>8} {'dim':>5} " + " ".join(f"{name:>12}" for name in backends)
    print(header)
    print("-" * len(header))
    for size in sizes:
        for dim in dims:
            matrix = rng.standard_normal((size, dim))
            matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
            matrix = np.ascontiguousarray(matrix)
            probe = rng.standard_normal(dim)
            probe /= np.linalg.norm(probe)
            tie = np.arange(size, dtype=np.int64)
            results = {}
            timings = {}
            for name in backends:
                backend = kernels.get_backend(name)
                timings[name] = time_call(lambda b=backend: b.topk_ip(matrix, probe, tie, n), repeat)
                results[name] = backend.topk_ip(matrix, probe, tie, n)[0]
            first = results[backends[0]]
            for name in backends[1:]:
                if not np.array_equal(first, results[name]):
                    raise SystemExit(f"backend disagreement at size={size} dim={dim}")
            row = f"{size:>8} {dim:>5} " + " ".join(
                f"{timings[name] * 1e3:>10.3f}ms" for name in backends
            )
            print(row)


def bench_joint(backends, batch_sizes, repeat, rng):
    print(f"\njoint_scores (best of {repeat})")
    header = f"{'batch':>8} " + " ".join(f"{name:>12}" for name in backends)
    print(header)
    print("-" * len(header))
    for batch in batch_sizes:
        s1 = rng.uniform(-1, 1, size=batch)
        s2 = rng.uniform(-1, 1, size=batch)
        timings = {}
        outputs = {}
        for name in backends:
            backend = kernels.get_backend(name)
            timings[name] = time_call(lambda b=backend: b.joint_scores(s1, s2), repeat)
            outputs[name] = backend.joint_scores(s1, s2)
        first = outputs[backends[0]]
        for name in backends[1:]:
            if not np.array_equal(first, outputs[name]):
                raise SystemExit(f"backend disagreement at batch={batch}")
        print(
            f"{batch:>8} " + " ".join(f"{timings[name] * 1e3:>10.3f}ms" for name in backends)
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1000,10000,100000")
    parser.add_argument("--dims", default="64,384")
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--batches", default="1000,100000,1000000")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)}")
    if len(backends) == 1:
        print("compiled kernels not built; timing the numpy fallback only")

    rng = np.random.default_rng(args.seed)
    sizes = [int(s) for s in args.sizes.split(",")]
    dims = [int(d) for d in args.dims.split(",")]
    batches = [int(b) for b in args.batches.split(",")]
    bench_topk(backends, sizes, dims, args.n, args.repeat, rng)
    bench_joint(backends, batches, args.repeat, rng)


if __name__ == "__main__":
    main()
