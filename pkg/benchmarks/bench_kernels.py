"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--sizes 500,1000,2000] [--repeat 5]

Each row reports the best-of-``repeat`` time per call for both backends,
their ratio, and the maximum absolute difference of the outputs.
"""
import argparse
import timeit

import numpy as np

from ungsl import _pykernels
from ungsl.graph import from_undirected

try:
    from ungsl import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def random_graph(n, avg_deg, rng):
    m = n * avg_deg // 2
    i = rng.integers(0, n, m)
    j = rng.integers(0, n, m)
    keep = i != j
    return from_undirected(n, i[keep], j[keep], rng.uniform(0.1, 1.0, keep.sum()))


def cases(n, rng):
    adj = random_graph(n, 16, rng)
    X = rng.standard_normal((n, 64))
    c = rng.uniform(0.2, 1.0, n)
    eps = rng.uniform(0.0, 1.0, n)
    scores = rng.standard_normal((n, n))
    ip, ix, d = adj.indptr, adj.indices, adj.data
    return adj.nnz, {
        "spmm": lambda k: k.spmm(ip, ix, d, X),
        "spmm_t": lambda k: k.spmm_t(ip, ix, d, X, n),
        "sddmm": lambda k: k.sddmm(ip, ix, X, X),
        "reweight": lambda k: k.reweight(ip, ix, d, c, eps, 2.0, 0.5)[0],
        "row_topk": lambda k: k.row_topk(scores, 10, True),
    }


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--sizes", default="500,1000,2000")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the Python backend is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':10s} {'n':>6s} {'nnz':>8s} {'cython':>11s} {'python':>11s} {'speedup':>8s} {'max diff':>9s}")
    for n in (int(s) for s in args.sizes.split(",")):
        nnz, fns = cases(n, rng)
        for name, fn in fns.items():
            out_c = np.asarray(fn(_ckernels), dtype=np.float64)
            out_p = np.asarray(fn(_pykernels), dtype=np.float64)
            diff = float(np.max(np.abs(out_c - out_p))) if out_c.size else 0.0
            tc = best_time(lambda: fn(_ckernels), args.repeat)
            tp = best_time(lambda: fn(_pykernels), args.repeat)
            print(f"{name:10s} {n:6d} {nnz:8d} {tc * 1e3:9.3f}ms {tp * 1e3:9.3f}ms {tp / tc:7.2f}x {diff:9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
