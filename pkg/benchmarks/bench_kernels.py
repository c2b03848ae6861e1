"""Time the numba kernels against the pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--users 20000] [--degree 20] [--dim 8] [--repeats 5]

Both tables are imported directly, so the env flag does not matter here.
"""

import argparse
import statistics
import time

import numpy as np

from gdmsr import kernels


def random_csr(rng, n_rows, n_cols, degree):
    # sorted unique columns per row
    counts = np.minimum(rng.poisson(degree, n_rows), n_cols)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.concatenate([np.sort(rng.choice(n_cols, c, replace=False)) for c in counts]).astype(np.int64)
    return indptr, indices


def timed(fn, repeats):
    fn()  # warm-up, includes jit compilation
    out = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return statistics.median(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=20000)
    ap.add_argument("--items", type=int, default=30000)
    ap.add_argument("--degree", type=int, default=20)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    indptr, indices = random_csr(rng, args.users, args.users, args.degree)
    ui_indptr, ui_indices = random_csr(rng, args.users, args.items, args.degree)
    n_edges = len(indices)
    src = kernels.row_ids(indptr)
    x = rng.normal(size=(args.users, args.dim))
    grad = rng.normal(size=(args.users, args.dim))
    scores = rng.random(n_edges)
    n_remove = (np.diff(indptr) * 0.4).astype(np.int64)
    rows = rng.integers(0, args.users, 4096)

    cases = {
        "self_mean": lambda k: k.self_mean(indptr, indices, x, x),
        "self_mean_backward": lambda k: k.self_mean_backward(indptr, indices, grad, args.users),
        "scatter_add_rows": lambda k: k.scatter_add_rows(src, x[indices], args.users),
        "csr_contains": lambda k: k.csr_contains(indptr, indices, src, indices),
        "shared_counts": lambda k: k.shared_counts(ui_indptr, ui_indices, src, indices),
        "bottom_mask": lambda k: k.bottom_mask(indptr, indices, scores, n_remove),
        "subset_mean": lambda k: k.subset_mean(indptr, indices, rows, x),
    }
    print(f"users={args.users} edges={n_edges} dim={args.dim} repeats={args.repeats}")
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, case in cases.items():
        t_np = timed(lambda: case(kernels.NUMPY), args.repeats)
        t_nb = timed(lambda: case(kernels.NUMBA), args.repeats)
        print(f"{name:<20}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
