"""Compare the Cython kernels with the numpy fallback, then time whole plans on each backend.

    python3 benchmarks/bench_kernels.py [--rows 2048] [--width 192] [--reps 7]

Kernel timings use ``timeit`` in this process.  The end-to-end rows run
``flowturbo bench`` in a subprocess per backend, because the backend is fixed
at import time.
"""
import argparse
import csv
import os
import subprocess
import sys
import tempfile
import timeit
from pathlib import Path

import numpy as np

from flowturbo import _kernels_py as py

try:
    from flowturbo import _ext as ext
except ImportError:
    ext = None


def kernel_cases(rows: int, width: int, rng):
    x = rng.standard_normal((rows, 2))
    W = rng.standard_normal((2, width))
    table = rng.standard_normal((3, width))
    y = rng.integers(0, 3, size=rows)
    z = rng.standard_normal((rows, width))
    b = rng.standard_normal(width)
    out = np.empty((rows, width))
    Wn = rng.standard_normal((width, 2))
    o2 = np.empty((rows, 2))
    d0, d1 = rng.standard_normal((rows, 2)), rng.standard_normal((rows, 2))
    return {
        "affine_table_silu": lambda m: m.affine_table_silu(x, W, table, y, out),
        "bias_silu": lambda m: m.bias_silu(z.copy(), b),
        "silu_backward": lambda m: m.silu_backward(z.copy(), z),
        "dense_narrow": lambda m: m.dense_narrow(z, Wn, o2),
        "cfg_combine": lambda m: m.cfg_combine(d0, d1, 1.5, o2),
        "heun_step": lambda m: m.heun_step(x, d0, d1, 0.05, o2),
    }


def time_kernel(fn, mod, reps: int) -> float:
    n = 20
    return 1e3 * min(timeit.repeat(lambda: fn(mod), number=n, repeat=reps)) / n


def end_to_end(reps: int) -> dict:
    results = {}
    for backend, flag in (("cython", "0"), ("python", "1")):
        with tempfile.TemporaryDirectory() as tmp:
            env = dict(os.environ, FLOWTURBO_PURE_PYTHON=flag)
            cmd = [sys.executable, "-m", "flowturbo", "bench", "--plans", "H8,H2P4R2,H1P5R3",
                   "--batch", "64,1024", "--reps", str(reps), "--out", tmp]
            subprocess.run(cmd, env=env, check=True, capture_output=True)
            with open(Path(tmp) / "bench.csv") as fh:
                results[backend] = list(csv.DictReader(fh))
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2048)
    ap.add_argument("--width", type=int, default=192)
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--skip-plans", action="store_true", help="kernel table only")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    cases = kernel_cases(args.rows, args.width, rng)
    print(f"kernels on {args.rows} x {args.width} (ms, best of {args.reps})")
    print(f"{'kernel':<20}{'numpy':>10}{'cython':>10}{'speedup':>10}")
    for name, fn in cases.items():
        tp = time_kernel(fn, py, args.reps)
        if ext is None:
            print(f"{name:<20}{tp:>10.3f}{'n/a':>10}{'':>10}")
            continue
        tc = time_kernel(fn, ext, args.reps)
        print(f"{name:<20}{tp:>10.3f}{tc:>10.3f}{tp / tc:>9.2f}x")

    if args.skip_plans:
        return
    print("\nwhole plans, CFG 1.5 (median ms)")
    print(f"{'backend':<8}{'plan':<8}{'B':>6}{'interpreted':>13}{'compiled':>10}{'ratio':>8}")
    for backend, rows in end_to_end(args.reps).items():
        for r in rows:
            ti, tc = float(r["interpreted_ms"]), float(r["compiled_ms"])
            print(f"{backend:<8}{r['plan']:<8}{r['B']:>6}{ti:>13.2f}{tc:>10.2f}{tc / ti:>8.3f}")


if __name__ == "__main__":
    main()
