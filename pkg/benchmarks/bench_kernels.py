"""Benchmark the numpy lattice kernels against their numba counterparts.

Runs each kernel on one large random instance per shape, reports best-of-N
wall time for both backends plus the maximum absolute difference between
their outputs (paths must agree exactly, lattices to float noise).

Usage: python3 benchmarks/bench_kernels.py [--frames 4000] [--states 300] [--repeats 5]
"""

import argparse
import time

import numpy as np

from actionseg import kernels_numpy

try:
    from actionseg import kernels_numba
except ImportError:
    kernels_numba = None


def _chain_instance(rng, T, S):
    scores = rng.normal(scale=2.0, size=(T, S))
    stay = rng.uniform(0.05, 0.95, S)
    self_lp = np.log(stay)
    next_lp = np.log1p(-stay)
    next_lp[-1] = -np.inf  # last state has no successor
    return scores, self_lp, next_lp


def _bigram_instance(rng, T, C, states_per):
    S = C * states_per
    scores = rng.normal(scale=2.0, size=(T, S))
    stay = rng.uniform(0.05, 0.95, S)
    self_lp = np.log(stay)
    chain_lp = np.log1p(-stay)
    label_of = np.repeat(np.arange(C, dtype=np.int64), states_per)
    local_of = np.tile(np.arange(states_per, dtype=np.int64), C)
    first_idx = np.arange(C, dtype=np.int64) * states_per
    final_idx = first_idx + states_per - 1
    jump_lp = np.log(rng.uniform(0.01, 1.0, (C, C)) / C)
    start_lp = np.log(np.full(C, 1.0 / C))
    end_lp = np.log(rng.uniform(0.1, 1.0, C))
    return (scores, self_lp, chain_lp, label_of, local_of,
            first_idx, final_idx, jump_lp, start_lp, end_lp)


def _time(fn, args, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _maxdiff(a, b):
    worst = 0.0
    for x, y in zip(a if isinstance(a, tuple) else (a,),
                    b if isinstance(b, tuple) else (b,)):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        finite = np.isfinite(x) & np.isfinite(y)
        if not np.array_equal(np.isfinite(x), np.isfinite(y)):
            return np.inf
        if finite.any():
            worst = max(worst, float(np.max(np.abs(x[finite] - y[finite]))))
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=4000)
    ap.add_argument("--states", type=int, default=300)
    ap.add_argument("--classes", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    chain = _chain_instance(rng, args.frames, args.states)
    states_per = max(1, args.states // args.classes)
    bigram = _bigram_instance(rng, args.frames, args.classes, states_per)

    cases = [
        ("viterbi_chain", "viterbi_chain", chain),
        ("forward_chain", "forward_chain", chain),
        ("backward_chain", "backward_chain", chain),
        ("viterbi_bigram", "viterbi_bigram", bigram),
    ]

    print(f"frames={args.frames} states={args.states} "
          f"classes={args.classes} repeats={args.repeats}")
    header = f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}{'max|diff|':>11}"
    print(header)
    print("-" * len(header))

    for name, attr, inst in cases:
        np_time, np_out = _time(getattr(kernels_numpy, attr), inst, args.repeats)
        if kernels_numba is None:
            print(f"{name:<16}{np_time * 1e3:>12.2f}{'n/a':>12}{'n/a':>9}{'n/a':>11}")
            continue
        fn = getattr(kernels_numba, attr)
        fn(*inst)  # JIT warm-up, excluded from timing
        nb_time, nb_out = _time(fn, inst, args.repeats)
        diff = _maxdiff(np_out, nb_out)
        print(f"{name:<16}{np_time * 1e3:>12.2f}{nb_time * 1e3:>12.2f}"
              f"{np_time / nb_time:>8.1f}x{diff:>11.2e}")

    if kernels_numba is None:
        print("numba backend not importable; numpy timings only")


if __name__ == "__main__":
    main()
