"""Time each hot kernel on the numpy and numba backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from uae import kernels
from uae.rng import Rng


def cases():
    rng = Rng(0)
    A = rng.normal((64, 64))
    S = A @ A.T
    D = rng.uniform((1000, 64))
    W = rng.normal((25, 64))
    Y = rng.normal((200, 25))
    y = Y[0]
    L = float(np.linalg.eigvalsh(W @ W.T).max())
    step = 1.0 / (2.0 * 1.0 * L)
    train = rng.normal((1200, 10))
    labels = rng.integers(10, (1200,))
    test = rng.normal((300, 10))
    return {
        "jacobi_eigh 64x64": ("jacobi_eigh", (S, 1e-12 * np.linalg.norm(S), 100)),
        "pairwise_scatter 1000x64": ("pairwise_scatter", (D,)),
        "ista 25x64": ("ista", (y, W, 1.0, step, 5000, 1e-9, np.zeros(64))),
        "ista_batch 200x25x64": ("ista_batch", (Y, W, 1.0, step, 2000, 1e-9)),
        "knn_vote 1200/300 k=3": ("knn_vote", (train, labels, test, 3, 10)),
    }


def best_time(fn, args, repeat):
    fn(*args)  # warm-up, includes numba compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    backends = sorted(kernels.BACKENDS)
    print(f"{'kernel':28s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for label, (name, a) in cases().items():
        t = {b: best_time(kernels.BACKENDS[b][name], a, args.repeat) for b in backends}
        row = f"{label:28s}" + "".join(f"{t[b] * 1e3:10.3f}ms" for b in backends)
        if "numba" in t:
            row += f"  {t['numpy'] / t['numba']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
