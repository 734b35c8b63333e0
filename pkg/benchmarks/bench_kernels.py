"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from pbsid import kernels
from pbsid.simulate import RodConfig, _operator, discretize


def cases(rng):
    n, m, r, T = 12, 4, 7, 20_000
    A = rng.normal(size=(n, n))
    A *= 0.9 / np.abs(np.linalg.eigvals(A)).max()
    B, C, K = rng.normal(size=(n, m)), rng.normal(size=(r, n)), 0.1 * rng.normal(size=(n, r))
    U, Y, x0 = rng.normal(size=(T, m)), rng.normal(size=(T, r)), rng.normal(size=n)
    At = rng.normal(size=(n, n))
    At *= 0.8 / np.abs(np.linalg.eigvals(At)).max()

    cfg = RodConfig()
    disc = discretize(cfg)
    lower, diag, upper = _operator(disc)
    mass_dt = disc.capacity / cfg.dt
    Urod = rng.uniform(size=(300, cfg.m))
    theta0 = np.zeros(disc.x.size)
    return {
        "ss_simulate (n=12, T=20000)": ("ss_simulate", (A, B, C, x0, U)),
        "predictor_simulate (n=12, T=20000)": ("predictor_simulate", (At, B, K, C, x0, U, Y, T)),
        "rod_integrate (201 nodes, 300 x 96 steps)": (
            "rod_integrate", (lower, diag + mass_dt, upper, mass_dt, disc.source, Urod, 96, theta0)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(backends)} (default: {kernels.BACKEND})")
    for label, (fname, fargs) in cases(rng).items():
        times = {}
        results = {}
        for b in backends:
            fn = getattr(kernels.BACKENDS[b], fname)
            results[b] = fn(*fargs)
            times[b] = min(timeit.repeat(lambda: fn(*fargs), number=1, repeat=args.repeat))
        line = f"{label:45s}" + "".join(f"  {b}: {1e3 * t:9.2f} ms" for b, t in times.items())
        if len(backends) == 2:
            diff = np.abs(results["cython"] - results["python"]).max()
            line += f"  speedup x{times['python'] / times['cython']:.1f}  max diff {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
