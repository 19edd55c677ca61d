#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Also asserts both backends produce bit-identical output on every workload,
so the numbers compare the same computation.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from banditlab import kernels
from banditlab._rng import STREAM_METRICS, STREAM_SIM, bit_generator
from banditlab.core import ExperimentConfig
from banditlab.env import generate_population


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_simulate(backend, repeats, n_users=2000, k=30, slots=10, m_avail=15):
    cfg = ExperimentConfig(n_users=n_users, k_topics=k, seed=99)
    pop = generate_population(cfg)
    est = np.ascontiguousarray(
        np.tile(np.linspace(0.05, 0.9, k), (n_users, 1)))
    gammas = np.full(n_users, 0.5)
    users = np.arange(n_users, dtype=np.int32)

    def run():
        counts = np.zeros((n_users, k), dtype=np.int64)
        totals = np.zeros(n_users, dtype=np.int64)
        out_t = np.zeros((n_users, slots), dtype=np.int32)
        out_s = np.zeros((n_users, slots), dtype=np.float64)
        out_f = np.zeros((n_users, slots, 7), dtype=np.uint8)
        out_n = np.zeros(n_users, dtype=np.int32)
        bitgens = [bit_generator(99, STREAM_SIM, u, 0) for u in range(n_users)]
        backend.simulate_day_batch(
            bitgens, users, est, counts, totals, gammas, pop.activity_rate,
            pop.novelty_lift, pop.play_aff, pop.loop_given_play,
            pop.completed_given_play, pop.skip_given_not_completed,
            pop.comment_aff, pop.share_aff, pop.like_aff, slots, m_avail,
            out_t, out_s, out_f, out_n)
        return out_t, out_s, out_f, out_n, counts

    elapsed = timeit(run, repeats)
    return elapsed, run()


def bench_beta(backend, repeats, n_users=500, k=30, mc=200):
    rng = np.random.default_rng(3)
    a = rng.uniform(1, 40, (n_users, k))
    b = rng.uniform(1, 40, (n_users, k))

    def run():
        out = np.zeros((n_users, k), dtype=np.int64)
        bitgens = [bit_generator(5, STREAM_METRICS, u, 0) for u in range(n_users)]
        backend.beta_argmax_batch(bitgens, a, b, mc, out)
        return out

    elapsed = timeit(run, repeats)
    return elapsed, run()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    names = kernels.available_backends()
    if len(names) < 2:
        print("compiled kernels unavailable; benchmarking the fallback only")
    backends = {name: kernels.get_backend(name) for name in names}

    workloads = [
        ("simulate_day_batch (U=2000, K=30, 10 slots)", bench_simulate),
        ("beta_argmax_batch (500 users, K=30, mc=200)", bench_beta),
    ]
    print(f"{'workload':<46} " + " ".join(f"{n:>12}" for n in names)
          + ("      speedup" if len(names) == 2 else ""))
    for label, bench in workloads:
        times = {}
        outputs = {}
        for name, backend in backends.items():
            times[name], outputs[name] = bench(backend, args.repeats)
        if len(names) == 2:
            ref = outputs[names[0]]
            other = outputs[names[1]]
            for x, y in zip(ref, other):
                assert np.array_equal(x, y), "backend outputs diverge"
        row = f"{label:<46} " + " ".join(f"{times[n]*1e3:>10.1f}ms" for n in names)
        if len(names) == 2:
            row += f"   {times['python'] / times['cython']:>8.1f}x"
        print(row)
    if len(names) == 2:
        print("outputs verified bit-identical across backends")


if __name__ == "__main__":
    main()
