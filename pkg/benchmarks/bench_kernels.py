"""Time the compiled kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``; add ``--repeat N`` for more
timing rounds.  Prints one line per kernel with the best time of each backend
and the speed-up.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np
from scipy.spatial.distance import cdist

from kpfusion import _pykernels

try:
    from kpfusion import _ckernels
except ImportError:
    _ckernels = None


def _cases(rng: np.random.Generator):
    pts = rng.standard_normal((120, 128))
    dist = np.ascontiguousarray(cdist(pts, pts))
    medoids = np.sort(rng.choice(120, size=4, replace=False)).astype(np.int64)
    labels, d1, d2 = _pykernels.nearest_medoids(dist, medoids)
    n = 8
    compat = np.ascontiguousarray(rng.random((n, n, n, n)))
    prob = rng.random((n, n))
    prob /= prob.sum(axis=1, keepdims=True)
    return {
        "nearest_medoids": lambda m: m.nearest_medoids(dist, medoids),
        "best_swap": lambda m: m.best_swap(dist, medoids, labels, d1, d2),
        "relaxation_support": lambda m: m.relaxation_support(compat, prob),
        "relaxation_iterate": lambda m: m.relaxation_iterate(compat, prob, 50, 0.0),
    }


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=20)
    args = parser.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    if _ckernels is None:
        print("compiled extension not built; timing the numpy backend only")
    print(f"{'kernel':20s} {'python ms':>10s} {'cython ms':>10s} {'speed-up':>9s}")
    for name, call in cases.items():
        py = min(timeit.repeat(lambda: call(_pykernels), number=args.number, repeat=args.repeat)) / args.number
        if _ckernels is None:
            print(f"{name:20s} {py * 1e3:10.4f} {'-':>10s} {'-':>9s}")
            continue
        cy = min(timeit.repeat(lambda: call(_ckernels), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:20s} {py * 1e3:10.4f} {cy * 1e3:10.4f} {py / cy:8.1f}x")


if __name__ == "__main__":
    main()
