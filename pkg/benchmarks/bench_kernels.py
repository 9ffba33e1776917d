"""Time the compiled and numpy kernel backends on the hot loops.

    python3 benchmarks/bench_kernels.py [--sizes 32 64 128] [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from pdeguide import kernels
from pdeguide.grid import GridSpec, SmoothingKernel
from pdeguide.problems import make_problem, source_array


def _cases(n: int):
    g = GridSpec.square(n)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.shape)
    out, tmp = np.empty(g.shape), np.empty(g.shape)
    p = make_problem("burgers", 0.02, g)
    plan = p.bc.plan(g)
    f = np.ascontiguousarray(source_array(p))
    w = SmoothingKernel(0.9).weights
    scratch = [np.empty(g.shape) for _ in range(3)]
    iters = 100

    def relax(mod):
        v = 0.01 * u
        mod.relax(v, kernels.EQ_BURGERS, 0.02, f, g.hx, g.hy, 1e-5, w, plan.pad,
                  kernels.TARGET_GRADIENT, plan.order, plan.kinds, plan.vals, iters, 1e10, *scratch)

    u1 = np.sin(2 * np.pi * np.linspace(0, 1, 16 * (n - 1) + 1))
    dx = 1.0 / (16 * (n - 1))
    cols = 8

    def march(mod):
        v = u1.copy()
        mod.burgers_march(v, 0.02, dx, 0.2 * dx * dx / 0.02, 64, cols, 16, np.zeros(cols),
                          np.zeros(cols), np.zeros((n, cols)))

    return {
        "laplacian": (lambda m: m.laplacian(u, g.hx, g.hy, out), 1),
        "smooth": (lambda m: m.smooth(u, w, plan.pad, tmp, out), 1),
        "residual": (lambda m: m.residual(u, kernels.EQ_BURGERS, 0.02, f, g.hx, g.hy, out), 1),
        f"relax x{iters}": (relax, iters),
        "burgers_march": (march, 64 * (cols - 1)),
    }


def run(sizes, repeat: int) -> list[dict]:
    mods = {"python": kernels.backend("python")}
    try:
        mods["cython"] = kernels.backend("cython")
    except ImportError:
        print("compiled backend not built; timing the numpy fallback only")
    rows = []
    for n in sizes:
        for name, (fn, _) in _cases(n).items():
            row = {"grid": n, "kernel": name}
            for label, mod in mods.items():
                number = max(1, int(0.05 / max(_once(fn, mod), 1e-7)))
                best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=repeat)) / number
                row[label] = best
            if "cython" in row:
                row["speedup"] = row["python"] / row["cython"]
            rows.append(row)
    return rows


def _once(fn, mod) -> float:
    return timeit.timeit(lambda: fn(mod), number=1)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args()
    rows = run(args.sizes, args.repeat)
    print(f"{'grid':>5} {'kernel':<14} {'python':>12} {'cython':>12} {'speedup':>8}")
    for r in rows:
        cy = f"{r['cython'] * 1e6:10.1f}us" if "cython" in r else f"{'-':>12}"
        sp = f"{r['speedup']:7.1f}x" if "speedup" in r else ""
        print(f"{r['grid']:>5} {r['kernel']:<14} {r['python'] * 1e6:10.1f}us {cy} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
