"""Time the compiled and pure-Python kernels on the same inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N] [--quick]

Prints one line per kernel and backend with the best wall time and the
speed-up of the compiled core, and checks that both backends agree.
"""
import argparse
import time

import numpy as np

from damageid import kernels
from damageid.process import ProcessBasis


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(quick=False):
    rng = np.random.default_rng(0)
    steps, nodes = (32, 65) if quick else (256, 1025)
    g_max = 0.25
    d0 = rng.uniform(0.0, 0.05, nodes)
    source = rng.uniform(0.0, g_max, (steps + 1, nodes))
    basis = ProcessBasis(1.0, (1.0,), 4, (4,), 12, 4.5)
    y = rng.uniform(-4.5, 4.5, 2_000 if quick else 200_000)
    return {
        "integrate_damage": lambda b: kernels.integrate_damage(d0, source, 1.0 / steps, 1.0, backend=b),
        "bspline_basis": lambda b: kernels.bspline_basis(basis.knots, 3, y, backend=b),
    }


def run(repeat=3, quick=False):
    """Return rows ``(kernel, backend, seconds, speedup, max_abs_diff)``."""
    rows = []
    for name, fn in cases(quick).items():
        results = {}
        for backend in sorted(kernels.BACKENDS):
            results[backend] = _best(lambda: fn(backend), repeat)
        ref_t, ref_out = results["python"]
        for backend, (t, out) in results.items():
            diff = max(float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(r, dtype=float))))
                       for a, r in zip(out, ref_out))
            rows.append((name, backend, t, ref_t / t, diff))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="small inputs")
    args = parser.parse_args()
    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; timing the Python fallback only")
    print(f"{'kernel':<18}{'backend':<10}{'best [s]':>12}{'speed-up':>10}{'max diff':>12}")
    for name, backend, t, speed, diff in run(args.repeat, args.quick):
        print(f"{name:<18}{backend:<10}{t:>12.4g}{speed:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
