"""Benchmark the hot numerical kernels across implementation paths.

Times every kernel in tensorfield.kernels on production-shaped inputs under
three implementations:

  loops   pure-Python reference loops (what numba compiles)
  numpy   vectorized fallback, active when TENSORFIELD_NUMBA=0
  active  whatever the package dispatched at import (numba-jitted loops
          when numba is importable and enabled, else the numpy path)

Each timing is best-of-N wall clock after a warmup call; the warmup also
absorbs JIT compilation. Paths are cross-checked for agreement before
timing so the speedup table can't silently compare different answers.

Run:  python3 benchmarks/bench_kernels.py [--repeats 5] [--scale 1.0]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tensorfield import kernels
from tensorfield.correlation import MaternParams
from tensorfield.gp import GridDomain, build_vecchia_plan


def build_workloads(scale):
    """Return {kernel_name: args_tuple} sized like a production fit."""
    rng = np.random.default_rng(2024)

    # Vecchia path: 40x40 grid, q=10 following neighbors, squared Matern
    # table, 24 fields (6 Cholesky components x 4 subjects).
    side = max(4, int(round(40 * np.sqrt(scale))))
    domain = GridDomain(side, side)
    plan = build_vecchia_plan(domain, q=10)
    table = domain.corr_table(MaternParams(2.0, 0.5), squared=True)
    gx = plan._gx
    gy = plan._gy
    nbrs = plan.neighbors
    dev = rng.standard_normal((24, domain.n))
    coef, cond_var = kernels._NUMPY["vecchia_factors"](
        nbrs, gx, gy, table, kernels.JITTER
    )

    # Batched 3x3 ops: packed lower-triangle (a11,a21,a22,a31,a32,a33).
    nmat = max(64, int(20000 * scale))
    tpack = rng.standard_normal((nmat, 6)) * 0.3
    tpack[:, [0, 2, 5]] = 0.5 + np.abs(tpack[:, [0, 2, 5]])
    spd = kernels._NUMPY["compose3_batch"](tpack)

    # Variogram accumulation: 20 replicate fields on a 20x20 grid, random
    # site pairs spread over 9 lag bins.
    vside = max(4, int(round(20 * np.sqrt(scale))))
    nsites = vside * vside
    npairs = max(16, int(8000 * scale))
    fields = rng.standard_normal((20, nsites, 6))
    pi = rng.integers(0, nsites, npairs)
    pj = rng.integers(0, nsites, npairs)
    bins = rng.integers(0, 9, npairs)

    return {
        "vecchia_factors": (nbrs, gx, gy, table, kernels.JITTER),
        "vecchia_residuals": (dev, coef, nbrs),
        "vecchia_quad": (dev, coef, nbrs, cond_var),
        "chol3_batch": (spd,),
        "compose3_batch": (tpack,),
        "eigvals3_batch": (spd,),
        "fa3_batch": (spd,),
        "variogram_accumulate": (fields, pi, pj, bins, 9),
    }


def check_agreement(name, args):
    ref = kernels._NUMPY[name](*args)
    for path_name, funcs in (("loops", kernels._LOOPS), ("active", kernels._ACTIVE)):
        got = funcs[name](*args)
        ref_parts = ref if isinstance(ref, tuple) else (ref,)
        got_parts = got if isinstance(got, tuple) else (got,)
        for a, b in zip(ref_parts, got_parts):
            if not np.allclose(a, b, rtol=1e-10, atol=1e-10):
                raise AssertionError(f"{name}: {path_name} disagrees with numpy path")


def best_of(func, args, repeats):
    func(*args)  # warmup; compiles on the jitted path
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description="Benchmark tensorfield kernels")
    parser.add_argument("--repeats", type=int, default=5, help="best-of repeat count")
    parser.add_argument(
        "--scale", type=float, default=1.0, help="workload size multiplier"
    )
    args = parser.parse_args()

    workloads = build_workloads(max(0.01, args.scale))
    paths = (
        ("loops", kernels._LOOPS),
        ("numpy", kernels._NUMPY),
        ("active", kernels._ACTIVE),
    )

    print(f"active dispatch: {kernels.ACTIVE_PATH}  (numba available: {kernels.HAS_NUMBA})")
    print(f"repeats: {args.repeats}  scale: {args.scale}")
    print()
    header = f"{'kernel':<22}" + "".join(f"{p:>12}" for p, _ in paths) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    for name, call_args in workloads.items():
        check_agreement(name, call_args)
        times = {}
        for path_name, funcs in paths:
            times[path_name] = best_of(funcs[name], call_args, max(1, args.repeats))
        speedup = times["loops"] / max(times["active"], 1e-12)
        row = f"{name:<22}"
        for path_name, _ in paths:
            row += f"{times[path_name] * 1e3:>10.3f}ms"
        row += f"{speedup:>9.1f}x"
        print(row)

    print()
    print("speedup = loops / active; times are best-of wall clock in ms")


if __name__ == "__main__":
    main()
