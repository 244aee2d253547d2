#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Builds a bus-mission product on a configurable grid, then times value
iteration sweeps and batch policy rollouts under both backends.  The first
numba call includes JIT compilation and is reported separately.

Usage:
    python benchmarks/bench_kernels.py [--size 8] [--uniform-T 8] [--n 200000]
"""

import argparse
import time

from mitlplan._kernels import HAVE_NUMBA
from mitlplan.formula import EventSet, parse, substitute_dist, uniform_truncation_vector
from mitlplan.game_model import GridWorldConfig, build_gridworld
from mitlplan.product_mdp import build_product
from mitlplan.simulator import estimate_success
from mitlplan.solver import extract_policy, value_iteration
from mitlplan.stochastic_ta import StaModel, truncate
from mitlplan.timed_automata import build_dta

FORMULA = ("D{geom:0.4} b1 & F (b1 & F[0,3] b3) | "
           "D{geom:0.7} b2 & F (b2 & F[0,3] b4)")


def build(size, T):
    f = parse(FORMULA)
    u = EventSet.from_formula(f)
    sta = StaModel(build_dta(substitute_dist(f)), u)
    trunc = uniform_truncation_vector(f, u, T)
    cfg = GridWorldConfig(size, size, (0, 0),
                          (("b3", (0, size - 1)), ("b4", (size - 1, 0))),
                          tuple(u.entries), (0.8, 0.1, 0.1))
    game = build_gridworld(cfg)
    return build_product(game, truncate(sta, trunc))


def time_vi(m, backend, repeats):
    best = float("inf")
    res = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = value_iteration(m, tol=1e-10, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=8, help="grid side length")
    ap.add_argument("--uniform-T", type=int, default=8, dest="T")
    ap.add_argument("--n", type=int, default=200_000, help="rollout count")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    t0 = time.perf_counter()
    m = build(args.size, args.T)
    print(f"model: {m.n_states} states, {m.n_edges} edges "
          f"(built in {time.perf_counter() - t0:.2f}s)")

    np_time, np_res = time_vi(m, "numpy", args.repeats)
    print(f"value iteration  numpy : {np_time * 1e3:9.1f} ms "
          f"({np_res.iterations} sweeps, V(z0)={np_res.initial_value:.6f})")
    if HAVE_NUMBA:
        t0 = time.perf_counter()
        warm = value_iteration(m, tol=1e-10, backend="numba")
        compile_time = time.perf_counter() - t0
        nb_time, nb_res = time_vi(m, "numba", args.repeats)
        drift = abs(np_res.values - nb_res.values).max()
        print(f"value iteration  numba : {nb_time * 1e3:9.1f} ms "
              f"(first call {compile_time * 1e3:.0f} ms incl. compile, "
              f"max |diff| vs numpy {drift:.1e})")
        print(f"  speedup: {np_time / nb_time:.1f}x")
    else:
        print("value iteration  numba : unavailable (numba not importable)")

    policy = extract_policy(m, np_res.values)
    t0 = time.perf_counter()
    est_np = estimate_success(m, policy, args.n, seed=1, backend="numpy")
    np_time = time.perf_counter() - t0
    print(f"rollouts ({args.n:>7}) numpy : {np_time * 1e3:9.1f} ms "
          f"(rate {est_np.rate:.5f})")
    if HAVE_NUMBA:
        estimate_success(m, policy, 100, seed=1, backend="numba")  # warm up
        t0 = time.perf_counter()
        est_nb = estimate_success(m, policy, args.n, seed=1, backend="numba")
        nb_time = time.perf_counter() - t0
        match = "identical" if est_nb.outcomes == est_np.outcomes else "MISMATCH"
        print(f"rollouts ({args.n:>7}) numba : {nb_time * 1e3:9.1f} ms "
              f"(rate {est_nb.rate:.5f}, outcomes {match})")
        print(f"  speedup: {np_time / nb_time:.1f}x")


if __name__ == "__main__":
    main()
