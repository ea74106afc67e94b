"""Time the compiled relaxation sweep against the numpy fallback.

    python benchmarks/bench_kernels.py [--resolution 32] [--sweeps 200] [--repeat 3]

Both kernels start from the same random field and run a fixed number of
sweeps (the stopping tolerance is disabled), so they do identical work.
"""

import argparse
import time

import numpy as np

from hmaplab import kernels
from hmaplab.geometry import build_ball_grid, build_icosphere
from hmaplab.minimizer import MinimizeOptions, _initial_field
from hmaplab.sobolev import SphereMap, edge_energy


def time_kernel(fn, ball, v0, sweeps, repeat):
    order = ball.sweep_order
    n_first = int(np.count_nonzero(ball.colors == 0))
    e0 = edge_energy(ball, v0)
    best = np.inf
    for _ in range(repeat):
        v = v0.copy()
        hist = np.zeros(sweeps)
        t = time.perf_counter()
        fn(v, ball.neighbors, ball.weights, order, n_first, e0, 0.0, sweeps, hist)
        best = min(best, time.perf_counter() - t)
    return best, v, hist[-1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=32)
    ap.add_argument("--level", type=int, default=5)
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    ball = build_ball_grid(args.resolution, build_icosphere(args.level))
    phi = SphereMap.identity(ball.sphere)
    v0 = _initial_field(ball, phi, MinimizeOptions(init="random", seed=0))

    print(f"N = {args.resolution}: {ball.n_interior} interior nodes, {args.sweeps} sweeps, best of {args.repeat}")
    t_py, v_py, e_py = time_kernel(kernels.python_relax, ball, v0, args.sweeps, args.repeat)
    print(f"  numpy fallback   {t_py:8.3f} s   {1e9 * t_py / (args.sweeps * ball.n_interior):7.1f} ns/node   E = {e_py:.12g}")
    if kernels.BACKEND != "cython":
        print("  compiled kernel not built; nothing to compare")
        return
    t_cy, v_cy, e_cy = time_kernel(kernels.relax, ball, v0, args.sweeps, args.repeat)
    print(f"  cython           {t_cy:8.3f} s   {1e9 * t_cy / (args.sweeps * ball.n_interior):7.1f} ns/node   E = {e_cy:.12g}")
    print(f"  speedup {t_py / t_cy:.1f}x, max |difference| {np.abs(v_py - v_cy).max():.1e}")


if __name__ == "__main__":
    main()
