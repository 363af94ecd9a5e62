"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat 3]

Inputs are sized like one desk-scale call of each kernel. The pure fallback is
timed on smaller inputs where it would otherwise take minutes; per-item rates
are reported so the two columns stay comparable.
"""

import argparse
import time

import numpy as np
import scipy.sparse as sp

from patientvec import kernels
from patientvec.cbow import draw_negatives, unigram_table
from patientvec.numeric import Rng


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def case_spmv(r, scale):
    m = sp.random(20000 // scale, 5000, density=0.01, format="csr", random_state=0)
    x = r.normal(5000)
    args = (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data, x)
    return (lambda be: be.spmv(*args)), m.nnz, "nnz"


def case_cbow(r, scale):
    n_pat, V, d, k = 400 // scale, 500, 100, 5
    seqs = [r.integers(0, V, size=int(r.integers(10, 60))) for _ in range(n_pat)]
    tokens = np.concatenate(seqs).astype(np.int64)
    offsets = np.r_[0, np.cumsum([len(s) for s in seqs])].astype(np.int64)
    negs = draw_negatives(tokens, unigram_table(tokens, V, 0.75), k, r)
    order = np.arange(n_pat, dtype=np.int64)
    syn0, syn1 = r.normal((V, d)) * 0.01, np.zeros((V, d))

    def run(be):
        be.cbow_epoch(tokens, offsets, order, 5, negs, syn0.copy(), syn1.copy(), 0.025, 1e-4, 0, len(tokens))
    return run, len(tokens), "tokens"


def case_svm(r, scale):
    n = 1600 // scale
    X = sp.random(n, 500, density=0.05, format="csr", random_state=1)
    y = np.where(r.random(n) < 0.5, -1.0, 1.0)
    q = np.asarray(X.multiply(X).sum(axis=1)).ravel() + 1.0
    order = r.permutation(n)
    ip, ix = X.indptr.astype(np.int64), X.indices.astype(np.int64)

    def run(be):
        alpha, w = np.zeros(n), np.zeros(501)
        for _ in range(5):
            be.svm_dcd_sweep(ip, ix, X.data, y, alpha, w, q, 1.0, order)
    return run, 5 * n, "updates"


def case_rmsprop_dense(r, scale):
    theta, g, cache = r.normal(300_000), r.normal(300_000), np.zeros(300_000)

    def run(be):
        be.rmsprop_dense(theta, g, cache, 1e-3, 0.9, 1e-8)
    return run, theta.size, "params"


def case_rmsprop_rows(r, scale):
    E, cache = r.normal((5000, 300)), np.zeros((5000, 300))
    rows = np.sort(r.permutation(5000)[:800]).astype(np.int64)
    g = r.normal((800, 300))

    def run(be):
        be.rmsprop_rows(E, rows, g, cache, 1e-3, 0.9, 1e-8)
    return run, g.size, "params"


CASES = {"spmv": case_spmv, "cbow_epoch": case_cbow, "svm_dcd_sweep": case_svm,
         "rmsprop_dense": case_rmsprop_dense, "rmsprop_rows": case_rmsprop_rows}
# the fallback loops in Python for these, so it gets a reduced input
PURE_SCALE = {"cbow_epoch": 10, "svm_dcd_sweep": 4}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.insert(0, ("cython", kernels.compiled_backend))
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<15}{'backend':<9}{'seconds':>10}{'rate (items/s)':>18}  unit")
    for name, make in CASES.items():
        rates = {}
        for bname, be in backends:
            run, n, unit = make(Rng(0), PURE_SCALE.get(name, 1) if bname == "python" else 1)
            t = best_of(lambda: run(be), args.repeat)
            rates[bname] = n / t
            print(f"{name:<15}{bname:<9}{t:>10.4f}{n / t:>18.3e}  {unit}")
        if len(rates) == 2:
            print(f"{'':<15}speedup {rates['cython'] / rates['python']:.1f}x")


if __name__ == "__main__":
    main()
