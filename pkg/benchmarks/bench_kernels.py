#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot paths of a simulation run on a realistic workload: the
candidate split-error scan used at every tree node, and one SGD epoch of the
factorization model.

Usage:
    python benchmarks/bench_kernels.py [--users N] [--artists N] [--genres N]
                                       [--density F] [--factors N] [--repeats N]
"""

import argparse
import time

import numpy as np

from coldstart import SyntheticConfig, backend, generate_synthetic, kernels
from coldstart.tree import _NodeArrays


def build_workload(args):
    cfg = SyntheticConfig(
        n_users=args.users,
        n_artists=args.artists,
        n_genres=args.genres,
        n_factors=6,
        density=args.density,
        noise_sd=3.0,
        seed=7,
    )
    matrix = generate_synthetic(cfg)
    node = _NodeArrays(matrix, matrix.users)
    cands = np.arange(node.n_items, dtype=np.int64)

    rng = np.random.default_rng(0)
    triples = list(matrix.iter_entries())
    users = sorted(matrix.users)
    items = sorted(matrix.rated_items())
    u_index = {u: k for k, u in enumerate(users)}
    i_index = {i: k for k, i in enumerate(items)}
    u_idx = np.array([u_index[u] for u, _, _ in triples], np.int64)
    i_idx = np.array([i_index[i] for _, i, _ in triples], np.int64)
    r = np.array([v for _, _, v in triples])
    sgd = {
        "u_idx": u_idx,
        "i_idx": i_idx,
        "r": r,
        "order": rng.permutation(len(r)).astype(np.int64),
        "pu": rng.normal(0, 0.1, (len(users), args.factors)),
        "qi": rng.normal(0, 0.1, (len(items), args.factors)),
        "bu": np.zeros(len(users)),
        "bi": np.zeros(len(items)),
    }
    return matrix, node, cands, sgd


def time_split_errors(node, cands, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        kernels.split_errors(
            node.indptr, node.rows, node.cols, node.vals,
            node.c_indptr, node.c_rows, node.c_vals,
            cands, node.n_items, 50.0,
        )
        best = min(best, time.perf_counter() - start)
    return best


def time_sgd_epoch(sgd, repeats):
    best = float("inf")
    for _ in range(repeats):
        state = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in sgd.items()}
        start = time.perf_counter()
        kernels.sgd_epoch(
            state["u_idx"], state["i_idx"], state["r"], state["order"],
            state["pu"], state["qi"], state["bu"], state["bi"],
            50.0, 0.01, 0.02,
        )
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, default=550)
    parser.add_argument("--artists", type=int, default=250)
    parser.add_argument("--genres", type=int, default=8)
    parser.add_argument("--density", type=float, default=0.13)
    parser.add_argument("--factors", type=int, default=8)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    matrix, node, cands, sgd = build_workload(args)
    print(
        f"workload: {len(matrix.users)} users x {len(matrix.items)} items, "
        f"{matrix.n_ratings} ratings, {len(cands)} split candidates, "
        f"f={args.factors}"
    )

    results = {}
    names = ["numba", "numpy"] if backend.HAVE_NUMBA else ["numpy"]
    for name in names:
        backend.set_backend(name)
        if name == "numba":
            kernels.warm_up()
        results[name] = {
            "split_errors": time_split_errors(node, cands, args.repeats),
            "sgd_epoch": time_sgd_epoch(sgd, args.repeats),
        }
    backend.set_backend("auto")

    header = f"{'kernel':<14}" + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for kernel_name in ("split_errors", "sgd_epoch"):
        row = f"{kernel_name:<14}"
        for n in names:
            row += f"{results[n][kernel_name] * 1e3:>10.2f}ms"
        if len(names) == 2:
            ratio = results["numpy"][kernel_name] / results["numba"][kernel_name]
            row += f"{ratio:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
