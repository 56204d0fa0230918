"""Compiled versus NumPy kernels on node sets of the sizes the oracle sees.

    python3 benchmarks/bench_core.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from levysaddle import _backend, _core_py


def node_set(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    v = np.sort(rng.uniform(-1.0, 3.0, n))
    logw = rng.normal(-3.0, 1.0, n)
    return v, logw


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    compiled = _backend._impl if _backend.COMPILED else None
    if compiled is None:
        print("compiled core unavailable; only the NumPy path is timed")
    print(f"{'kernel':<14}{'nodes':>9}{'numpy ms':>12}{'compiled ms':>13}{'speedup':>9}")
    for n in (2_000, 20_000, 200_000):
        v, logw = node_set(n)
        etas = np.linspace(0.0, 40.0, 15)
        cases = {
            "contour_sums": lambda m: m.contour_sums(v, logw, 2.0, etas),
            "log_moment": lambda m: m.log_moment(v, logw, 2.0, 2),
            "cos_sums": lambda m: m.cos_sums(v, logw, etas),
        }
        for name, call in cases.items():
            t_py = min(timeit.repeat(lambda: call(_core_py), number=1, repeat=args.repeat)) * 1e3
            if compiled is not None:
                t_c = min(timeit.repeat(lambda: call(compiled), number=1, repeat=args.repeat)) * 1e3
                print(f"{name:<14}{n:>9}{t_py:>12.3f}{t_c:>13.3f}{t_py / t_c:>9.1f}")
            else:
                print(f"{name:<14}{n:>9}{t_py:>12.3f}{'-':>13}{'-':>9}")


if __name__ == "__main__":
    main()
