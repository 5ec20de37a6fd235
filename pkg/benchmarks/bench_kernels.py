"""Timing comparison of the numba kernels against the numpy fallback.

Run twice, once per backend::

    python benchmarks/bench_kernels.py
    ROUGHMF_NO_NUMBA=1 python benchmarks/bench_kernels.py

or pass --both to have the script re-exec itself with the flag set and
print a side-by-side table.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _setup(cells: int, d: int, seed: int):
    from roughmf import _accel
    from roughmf.grids import TimeGrid
    from roughmf.roughpath import STRAT, NoisePath, _pair_indices, brownian_lift

    noise = NoisePath.generate(seed, TimeGrid.regular(0.0, 1.0, cells * 8), d)
    rp = brownian_lift(noise, TimeGrid.regular(0.0, 1.0, cells), STRAT)
    ii, jj = _pair_indices(cells)
    return _accel, rp, ii, jj


def run_benchmarks(cells: int, d: int, repeats: int) -> dict:
    _accel, rp, ii, jj = _setup(cells, d, seed=0)
    X, A, t = rp.values, rp._cum, rp.times
    a0 = np.random.default_rng(1).normal(size=(d, d, d)) / d
    a1 = np.random.default_rng(2).normal(size=(cells, d, d))
    dX = np.diff(X, axis=0)
    hs = np.diff(t)

    cases = {
        "pair_sup_first": lambda: _accel.pair_sup_first(X, t, ii, jj, rp.alpha),
        "pair_sup_second": lambda: _accel.pair_sup_second(
            X, A, t, ii, jj, rp.alpha
        ),
        "pair_sup_second_diff": lambda: _accel.pair_sup_second_diff(
            X, A, 1.1 * X, 1.1 * A, t, ii, jj, rp.alpha
        ),
        "linear_flow_maps": lambda: _accel.linear_flow_maps(
            dX, rp.cells, hs, a0, a1, a1, False
        ),
    }
    out = {}
    for name, fn in cases.items():
        fn()  # warm-up (includes any jit compilation)
        best = min(_time(fn) for _ in range(repeats))
        out[name] = best
    return out


def _time(fn) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", type=int, default=1024)
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--both", action="store_true",
                    help="run numba and numpy backends and print a table")
    ap.add_argument("--json", action="store_true", help="emit results as JSON")
    args = ap.parse_args(argv)

    if args.both:
        results = {}
        for label, flag in (("numba", "0"), ("numpy", "1")):
            env = dict(os.environ, ROUGHMF_NO_NUMBA=flag)
            cmd = [sys.executable, __file__, "--json",
                   "--cells", str(args.cells), "--d", str(args.d),
                   "--repeats", str(args.repeats)]
            results[label] = json.loads(
                subprocess.run(cmd, env=env, check=True,
                               capture_output=True, text=True).stdout
            )
        names = list(results["numba"])
        w = max(map(len, names))
        print(f"cells={args.cells} d={args.d} (best of {args.repeats})")
        print(f"{'kernel':{w}}  {'numba':>10}  {'numpy':>10}  speedup")
        for name in names:
            a, b = results["numba"][name], results["numpy"][name]
            print(f"{name:{w}}  {a * 1e3:8.3f}ms  {b * 1e3:8.3f}ms  {b / a:6.1f}x")
        return

    from roughmf import _accel

    res = run_benchmarks(args.cells, args.d, args.repeats)
    if args.json:
        print(json.dumps(res))
    else:
        backend = "numba" if _accel.HAVE_NUMBA else "numpy"
        print(f"backend={backend} cells={args.cells} d={args.d}")
        for name, t in res.items():
            print(f"  {name}: {t * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
