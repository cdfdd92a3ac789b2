"""Compiled vs pure-Python chain kernel: wall time and agreement.

    python benchmarks/bench_kernels.py --steps 20000 --dims 1 4 16 64
"""

import argparse
import time

import numpy as np

from flatmc import kernels
from flatmc.density import GaussianMixture
from flatmc.flatten import FlattenedTarget, FlattenSpec
from flatmc.samplers import ChainConfig, run_mala, run_ula


def two_mode(d: int) -> GaussianMixture:
    means = np.zeros((2, d))
    means[0, 0], means[1, 0] = -3.0, 3.0
    return GaussianMixture([0.5, 0.5], means, [1.0, 1.5])


def timed(fn, repeat: int):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 4, 16, 64])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    try:
        kernels.backend("cython")
    except ImportError:
        print("compiled extension not built; only the Python kernel is available")
        return

    print(f"{'method':<6} {'d':>4} {'cython s':>10} {'python s':>10} {'speedup':>8} {'max |diff|':>11}")
    for d in args.dims:
        gm = two_mode(d)
        flat = FlattenedTarget(gm, FlattenSpec(gm.u(np.zeros(d)) + 1.0))
        cfg = ChainConfig(step=0.1, steps=args.steps, seed=args.seed)
        for name, run in (("mala", lambda b: run_mala(flat, cfg, backend=b)[0]),
                          ("ula", lambda b: run_ula(flat, cfg, backend=b))):
            tc, xc = timed(lambda: run("cython"), args.repeat)
            tp, xp = timed(lambda: run("python"), 1)
            diff = float(np.max(np.abs(xc - xp)))
            print(f"{name:<6} {d:>4} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f} {diff:>11.3g}")


if __name__ == "__main__":
    main()
