"""Benchmark the hot kernels: numba-compiled vs interpreted fallback.

Run:  python benchmarks/bench_kernels.py
The fallback path is the same source executed by the interpreter, so the
comparison isolates compilation gains.  Set TRILEG_NUMBA=0 to confirm the
package still works (slower) without compilation.
"""

import time

import numpy as np

from trileg import kernels


def timeit(fn, *args, repeats=5, inner=1):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def main():
    rng = np.random.default_rng(0)
    rows = []

    # Batched safety projection, 100k triples.
    prev = rng.uniform(-3, 3, (100_000, 3))
    dv = rng.uniform(-1.5, 1.5, (100_000, 3))
    out = np.empty_like(prev)
    args = (prev, dv, 2.5, 0.5, out)
    if kernels.NUMBA_ENABLED:
        kernels.project_batch_jit(*args)  # compile outside the timing
        jit = timeit(kernels.project_batch_jit, *args)
    else:
        jit = None
    py = timeit(kernels.project_batch_py, *args)
    rows.append(("project_batch (100k)", py, jit))

    # Triangle rasterization at frame scale.
    buf = np.zeros((480, 640, 3), dtype=np.uint8)
    tri = (120.0, 60.0, 520.0, 110.0, 300.0, 430.0)
    targs = (buf, *tri, 150, 170, 205, 0, 0, 640, 480)
    if kernels.NUMBA_ENABLED:
        kernels.fill_triangle_jit(*targs)
        jit = timeit(kernels.fill_triangle_jit, *targs, inner=10)
    else:
        jit = None
    py = timeit(kernels.fill_triangle_py, *targs, inner=1)
    rows.append(("fill_triangle (full frame)", py, jit))

    # Piecewise-linear lookups in a tight loop.
    xs = np.array([-2.0, -0.8, 0.8, 2.0])
    ys = np.array([3.0, 0.0, 0.0, -5.0])
    vs = rng.uniform(-2.5, 2.5, 10_000)

    def sweep(fn):
        total = 0.0
        for v in vs:
            total += fn(xs, ys, v)
        return total

    if kernels.NUMBA_ENABLED:
        sweep(kernels.interp_clamped_jit)
        jit = timeit(sweep, kernels.interp_clamped_jit)
    else:
        jit = None
    py = timeit(sweep, kernels.interp_clamped_py)
    rows.append(("interp_clamped (10k calls)", py, jit))

    print(f"numba enabled: {kernels.NUMBA_ENABLED}")
    print(f"{'kernel':<30} {'python':>12} {'numba':>12} {'speedup':>9}")
    for name, py, jit in rows:
        if jit is None:
            print(f"{name:<30} {py * 1e3:>10.3f}ms {'-':>12} {'-':>9}")
        else:
            print(f"{name:<30} {py * 1e3:>10.3f}ms {jit * 1e3:>10.3f}ms {py / jit:>8.1f}x")


if __name__ == "__main__":
    main()
