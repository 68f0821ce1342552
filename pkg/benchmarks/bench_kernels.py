"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 64] [--markers 4096] [--repeat 5]

Prints one line per kernel with both timings, the speedup, and the largest
difference between the two outputs.  A final section times full solver steps
under each backend.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from alfven import _kernels_py as py
from alfven.grid import Grid3
from alfven.solver import band_limits

try:
    from alfven import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n: int, nmark: int, rng):
    g = Grid3((n, n, n))
    shape = g.spectral_shape
    M = rng.standard_normal((3, 3) + shape) + 1j * rng.standard_normal((3, 3) + shape)
    zp = rng.standard_normal((3,) + shape) + 1j * rng.standard_normal((3,) + shape)
    zm = rng.standard_normal((3,) + shape) + 1j * rng.standard_normal((3,) + shape)
    k1, k2, k3 = g.k_odd_1d
    b = band_limits(g)

    def nonlinear(mod):
        out = [np.zeros((3,) + shape, complex), np.zeros((3,) + shape, complex), np.zeros(shape, complex)]
        return lambda: (mod.spectral_nonlinear(M, k1, k2, k3, b[0], b[1], b[2], *out, zp, zm, 1.0, True), out)[1]

    nn = 3 * int(np.prod(shape))
    u = rng.standard_normal((3, nn // 3)) + 0j
    kk = rng.standard_normal((3, nn // 3)) + 0j
    e = np.exp(-rng.random(nn // 3)) + 0j

    def stage(mod):
        out = np.empty_like(u)
        return lambda: (mod.lawson_stage(u, kk, e, e, 0.05, 2, out), out)[1]

    fields = np.ascontiguousarray(rng.standard_normal((12,) + g.shape))
    pos = rng.uniform(-4, 4, (nmark, 3))
    origin = np.asarray(g.origin, float)
    spacing = np.asarray(g.spacing, float)

    def tric(mod):
        out = np.empty((12, nmark))
        return lambda: (mod.tricubic(fields, origin, spacing, pos, out), out)[1]

    x3 = np.arange(n) * (2 * np.pi / n)
    ucol = np.ascontiguousarray(np.broadcast_to(x3 + 0.05 * np.sin(x3), g.shape)
                                + 0.01 * rng.standard_normal(g.shape[:2])[:, :, None])
    levels = np.linspace(0.5, 5.5, 8)

    def roots(mod):
        out = np.empty((len(levels), n, n))
        return lambda: (mod.column_roots(ucol, 2 * np.pi, levels, out), out)[1]

    return [("spectral_nonlinear", nonlinear), ("lawson_stage", stage), ("tricubic", tric), ("column_roots", roots)]


def step_time(n: int, backend: str, steps: int) -> float:
    code = (
        "import time, numpy as np\n"
        "from alfven.grid import Grid3\n"
        "from alfven.initial_data import InitialDataSpec, make_initial_data\n"
        "from alfven.geometry import MarkerCloud, MarkerComponent\n"
        "from alfven.solver import SolverConfig, Stepper\n"
        f"g = Grid3(({n},)*3, (8*np.pi,)*3)\n"
        "st = make_initial_data(InitialDataSpec('bump', 0.01), g)\n"
        "s = Stepper(st, SolverConfig(0.02), [MarkerComponent(MarkerCloud.lattice(g, 4))])\n"
        "s.step()\n"
        "t0 = time.perf_counter()\n"
        f"for _ in range({steps}): s.step()\n"
        f"print((time.perf_counter() - t0) / {steps})\n"
    )
    env = dict(os.environ, ALFVEN_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64, help="grid size per axis")
    ap.add_argument("--markers", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=5, help="solver steps to time per backend (0 = skip)")
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':20s} {'compiled [ms]':>14s} {'numpy [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for name, make in cases(args.n, args.markers, rng):
        fc, fp = make(cy), make(py)
        a, b = fc(), fp()
        diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in
                   zip(a if isinstance(a, list) else [a], b if isinstance(b, list) else [b]))
        tc, tp = best_of(fc, args.repeat), best_of(fp, args.repeat)
        print(f"{name:20s} {1e3 * tc:14.3f} {1e3 * tp:12.3f} {tp / tc:8.2f} {diff:10.2e}")
    if args.steps:
        tc = step_time(args.n, "compiled", args.steps)
        tp = step_time(args.n, "python", args.steps)
        print(f"{'solver step':20s} {1e3 * tc:14.3f} {1e3 * tp:12.3f} {tp / tc:8.2f} {'':>10s}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
