"""Benchmark the hot kernels: numba backend against the numpy fallback.

Runs the two operations that dominate signal-engine runtime (the ordered
triangular quadrature and the time-ordered pair amplitude) at a few grid
sizes and reports per-call times and speedups.  The numba path is warmed
up before timing so compilation is excluded.

Usage:  python benchmarks/benchmark_kernels.py
"""

import time

import numpy as np

from qlis import _kernels


def time_call(fn, *args, n_runs=5):
    best = np.inf
    for _ in range(n_runs):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def make_case(n, d, seed=7):
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    va = rng.normal(size=(n, d, d)) + 1j * rng.normal(size=(n, d, d))
    vb = rng.normal(size=(n, d, d)) + 1j * rng.normal(size=(n, d, d))
    pin_a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    pin_b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    xs = np.linspace(-1.0, 1.0, n)
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    return amp, va, vb, pin_a, pin_b, 0.31, -0.17, xs, xs, n - 1, n - 1, psi, 0.01


def main():
    print(f"numba backend available: {_kernels.NUMBA_ENABLED}")
    if not _kernels.NUMBA_ENABLED:
        print("set QLIS_NUMBA=1 (with numba installed) to benchmark the "
              "compiled path; only the numpy fallback is timed below")

    print("\ntri_ordered_sum (ordered triangle quadrature)")
    print(f"{'n':>6} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for n in (128, 256, 512):
        rng = np.random.default_rng(0)
        f = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        t_np, ref = time_call(_kernels._tri_ordered_sum_np, f, n - 1, 0.01)
        if _kernels.NUMBA_ENABLED:
            _kernels._tri_ordered_sum_nb(f, n - 1, 0.01)  # warm up
            t_nb, got = time_call(_kernels._tri_ordered_sum_nb, f, n - 1, 0.01)
            assert abs(got - ref) < 1e-9 * abs(ref)
            print(f"{n:>6} {1e3 * t_np:>12.3f} {1e3 * t_nb:>12.3f} "
                  f"{t_np / t_nb:>8.1f}x")
        else:
            print(f"{n:>6} {1e3 * t_np:>12.3f} {'-':>12} {'-':>9}")

    print("\nt_ordered_pair_amplitude (time-ordered double integral)")
    print(f"{'n':>6} {'d':>3} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for n, d in ((96, 3), (192, 3), (256, 4)):
        args = make_case(n, d)
        t_np, ref = time_call(_kernels._t_ordered_pair_amplitude_np, *args)
        if _kernels.NUMBA_ENABLED:
            _kernels._t_ordered_pair_amplitude_nb(*args)  # warm up
            t_nb, got = time_call(_kernels._t_ordered_pair_amplitude_nb, *args)
            assert np.max(np.abs(got - ref)) < 1e-9 * np.max(np.abs(ref))
            print(f"{n:>6} {d:>3} {1e3 * t_np:>12.3f} {1e3 * t_nb:>12.3f} "
                  f"{t_np / t_nb:>8.1f}x")
        else:
            print(f"{n:>6} {d:>3} {1e3 * t_np:>12.3f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
