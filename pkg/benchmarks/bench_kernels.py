"""Benchmark: compiled kernels vs the NumPy fallback on the hot substeps.

Run:  python benchmarks/bench_kernels.py [N]
"""
import sys
import time

import numpy as np

from nlslab import _kernels_py

try:
    from nlslab import _kernels
    backends = [("cython", _kernels), ("numpy", _kernels_py)]
except ImportError:
    print("compiled extension not built; benchmarking the fallback only")
    backends = [("numpy", _kernels_py)]


def bench(impl, N, reps=400):
    rng = np.random.default_rng(0)
    r = np.linspace(0.05, 120.0, N)
    V = -2.5 * np.exp(-((r / 2.0) ** 2))
    cap = np.zeros(N)
    w = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) * r
    p = V * 0.5
    m = V * 0.3
    t0 = time.perf_counter()
    for _ in range(reps):
        impl.nonlinear_phase_step(w, r, V, cap, 0.0025, -1.0, 0.0, 1.0, 1.0)
    t_nl = (time.perf_counter() - t0) / reps
    z = w.copy()
    t0 = time.perf_counter()
    for _ in range(reps):
        impl.linearized_phase_step(z, p, m, 0.0025)
    t_lin = (time.perf_counter() - t0) / reps
    return t_nl, t_lin


def main():
    N = int(sys.argv[1]) if len(sys.argv) > 1 else 2048
    results = {}
    for name, impl in backends:
        t_nl, t_lin = bench(impl, N)
        results[name] = (t_nl, t_lin)
        print(f"{name:>7}: nonlinear_phase_step {t_nl * 1e6:8.2f} us/call   "
              f"linearized_phase_step {t_lin * 1e6:8.2f} us/call   (N = {N})")
    if len(results) == 2:
        s_nl = results["numpy"][0] / results["cython"][0]
        s_lin = results["numpy"][1] / results["cython"][1]
        print(f"speedup: nonlinear {s_nl:.2f}x, linearized {s_lin:.2f}x")


if __name__ == "__main__":
    main()
