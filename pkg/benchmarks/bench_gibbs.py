"""Time the compiled Gibbs kernel against the numpy fallback.

Usage: python3 benchmarks/bench_gibbs.py [--chains N] [--sweeps S] [--reps R]

Both lanes consume identical pre-drawn uniforms, so the timing compares
pure kernel cost on the same workload.
"""

import argparse
import time

import numpy as np

from ssmrf import kernels
from ssmrf.datagen import gen_block, gen_lattice
from ssmrf.gibbs import build_adjacency


def bench_lane(lane, states, args_, reps):
    best = float("inf")
    for _ in range(reps):
        work = states.copy()
        t0 = time.perf_counter()
        lane(work, *args_)
        best = min(best, time.perf_counter() - t0)
    return best, work


def run_case(name, gt, n, sweeps, reps):
    m, p = gt.spec, gt.params
    indptr, nbr, wts = build_adjacency(p, m)
    rng = np.random.default_rng(0)
    states = (rng.random((n, m.d)) < 0.5).astype(np.uint8)
    u = rng.random((n, sweeps, m.d))
    args_ = (indptr, nbr, wts, p.biases, u, 0, sweeps)

    t_np, out_np = bench_lane(kernels.gibbs_sweeps_numpy, states, args_, reps)
    line = f"{name:<14} d={m.d:<4} chains={n:<5} sweeps={sweeps:<4}"
    if kernels.HAS_NUMBA:
        kernels.gibbs_sweeps_numba(states.copy(), *args_)  # warm the JIT
        t_nb, out_nb = bench_lane(kernels.gibbs_sweeps_numba, states, args_,
                                  reps)
        match = "ok" if np.array_equal(out_np, out_nb) else "MISMATCH"
        print(f"{line} numpy {t_np * 1e3:8.2f} ms   numba {t_nb * 1e3:8.2f} ms"
              f"   speedup {t_np / t_nb:5.1f}x   states {match}")
    else:
        print(f"{line} numpy {t_np * 1e3:8.2f} ms   (numba unavailable)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--chains", type=int, default=100)
    ap.add_argument("--sweeps", type=int, default=50)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    run_case("block", gen_block(0), args.chains, args.sweeps, args.reps)
    run_case("lattice 10x10", gen_lattice(0), args.chains, args.sweeps,
             args.reps)


if __name__ == "__main__":
    main()
