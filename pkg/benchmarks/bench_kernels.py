"""Compiled vs numpy gain kernels on a few grid sizes.

    python3 benchmarks/bench_kernels.py [--sizes 6 8] [--batch 4] [--repeat 3]
"""
import argparse
import time

import numpy as np

from acoustic_lab import _kernels_py
from acoustic_lab.collision_ops import KernelSpec, angular_quadrature, self_interaction
from acoustic_lab.velocity_space import build_grid

try:
    from acoustic_lab import _kernels
except ImportError:
    _kernels = None


def _args(grid, kernel):
    cth, bth, cphi, sphi = angular_quadrature(kernel)
    return (
        *[np.ascontiguousarray(a) for a in grid.axes],
        np.ascontiguousarray(grid.nodes),
        np.ascontiguousarray(grid.weights * grid.mu),
        float(kernel.gamma),
        self_interaction(grid, kernel.gamma),
        cth, np.ascontiguousarray(bth), cphi, sphi, bool(grid.uniform),
    )


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[6, 8])
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    kernel = KernelSpec()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'n_v':>6}{'numpy s':>12}{'cython s':>12}{'speedup':>10}{'max diff':>12}")
    for n in args.sizes:
        grid = build_grid(1.0, (n, n, n), "gauss-hermite")
        base = _args(grid, kernel)
        h = np.ascontiguousarray(rng.standard_normal((grid.size, args.batch)))
        cases = {
            "gain_matrix": lambda m: m.gain_matrix(*base),
            "gain_bilinear": lambda m: m.gain_bilinear(*base, h, h),
        }
        for name, call in cases.items():
            t_py, r_py = best_of(lambda: call(_kernels_py), args.repeat)
            if _kernels is None:
                print(f"{name:<14}{grid.size:>6}{t_py:>12.4f}{'n/a':>12}")
                continue
            t_cy, r_cy = best_of(lambda: call(_kernels), args.repeat)
            diff = float(np.max(np.abs(r_py - r_cy)))
            print(f"{name:<14}{grid.size:>6}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
