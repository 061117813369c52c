"""Time the compiled and pure-Python solver kernels on the published network.

Usage::

    python bench/bench_backends.py [--t 1 5 10 30] [--iters 2000] [--repeat 3]

Each solve runs a fixed iteration budget (tolerance and stall rules disabled)
from the same initial point, so both kernels do identical work. The last
column compares the final objectives. The kernels sum in different orders, so
roundoff differences grow along the nonconvex trajectory and the gap widens
with T.
"""
import argparse
import time

import numpy as np

from spacetime_ota.network import build_instance, draw_channels, draw_samples, generate_topology
from spacetime_ota.solver import SolverConfig, available_backends, initial_point, solve


def make_instance(seed, ns=50, nr=30, degree=20):
    rng = np.random.default_rng(seed)
    topo = generate_topology(ns, nr, degree, rng)
    return build_instance(topo, draw_channels(topo, rng), draw_samples(ns, rng), 1.0, 0.1)


def time_solve(inst, T, cfg, backend, repeat):
    init = initial_point(inst, T, cfg.init_scale, np.random.default_rng(T))
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        _, trace = solve(inst, T, cfg, init=init, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace.objective_history[-1], trace.iterations_run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t", type=int, nargs="+", default=[1, 5, 10, 20, 30])
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; only the python backend is available")
    inst = make_instance(args.seed)
    cfg = SolverConfig(max_iters=args.iters, rel_tol=0.0, stall_iters=0)

    print(f"{'T':>4} " + " ".join(f"{b + ' us/iter':>18}" for b in backends)
          + f" {'speedup':>8} {'obj rel diff':>13}")
    for T in args.t:
        res = {b: time_solve(inst, T, cfg, b, args.repeat) for b in backends}
        per_iter = {b: 1e6 * res[b][0] / res[b][2] for b in backends}
        line = f"{T:>4} " + " ".join(f"{per_iter[b]:>18.1f}" for b in backends)
        if len(backends) == 2:
            speedup = per_iter["python"] / per_iter["compiled"]
            fa, fb = res["compiled"][1], res["python"][1]
            line += f" {speedup:>7.2f}x {abs(fa - fb) / abs(fb):>13.1e}"
        print(line)


if __name__ == "__main__":
    main()
