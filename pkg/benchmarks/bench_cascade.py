"""Compiled vs numpy cascade kernel on synthetic economies.

    python3 benchmarks/bench_cascade.py [--sizes 1000,10000] [--targets 200] [--repeat 3]

Each row times ESRI for ``targets`` firms with one worker and checks that the
two kernels agree. "random" targets are a uniform sample, which is what an
all-firm profile looks like; "largest" are the biggest firms, whose cascades
reach most of the network and leave the active-set kernel little to skip.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from supplynet.esri import esri_all
from supplynet.esri.engine import BACKEND, esri_for, get_kernel, prepare
from supplynet.synthgen import generate_economy


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,10000")
    ap.add_argument("--mean-degree", type=float, default=4.8)
    ap.add_argument("--targets", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--full", action="store_true", help="also time all-firm ESRI with the compiled kernel")
    args = ap.parse_args(argv)
    if BACKEND != "compiled":
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")

    print(f"{'n':>7} {'arcs':>7} {'targets':>9} {'python s':>9} {'compiled s':>10} {'speedup':>8} {'max |diff|':>10}")
    for n in (int(x) for x in args.sizes.split(",")):
        net, _ = generate_economy(n, args.mean_degree, seed=0)
        _, mats = prepare(net)
        rng = np.random.default_rng(0)
        k = min(args.targets, n)
        sets = {
            "random": np.sort(rng.choice(n, size=k, replace=False)),
            "largest": np.sort(np.argsort(-net.sizes)[:k]),
        }
        get_kernel("compiled")
        for label, targets in sets.items():
            t_py, (v_py, _) = best_of(lambda: esri_for(net, targets, workers=1, mats=mats, kernel="python"), args.repeat)
            t_c, (v_c, _) = best_of(lambda: esri_for(net, targets, workers=1, mats=mats, kernel="compiled"), args.repeat)
            diff = float(np.max(np.abs(v_py - v_c)))
            print(f"{n:>7} {net.m:>7} {label:>9} {t_py:>9.3f} {t_c:>10.3f} {t_py / t_c:>7.1f}x {diff:>10.1e}")
        if args.full:
            t_all, _ = best_of(lambda: esri_all(net, workers=1), 1)
            print(f"        all {n} firms, compiled: {t_all:.2f} s")

if __name__ == "__main__":
    main()
