"""Compare the numba and numpy kernel backends.

Run with ``python benchmarks/bench_kernels.py``. Kernel timings exclude numba
compilation (one warm-up call first). The end-to-end row times the full MC
Fisher sweep on the 5-4-4-3 ReLU MLP with each backend swapped in.
"""
import argparse
import time

import numpy as np

from curvlab import _kernels
from curvlab.cli import mc_sweep_rows
from curvlab.io import synthetic_dataset
from curvlab.losses import LossConfig
from curvlab.nn import mlp


def best_of(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(rng):
    v_small = rng.standard_normal((3000, 24))
    v_large = rng.standard_normal((100_000, 59))
    jac = rng.standard_normal((100, 3, 59))
    hess = rng.standard_normal((100, 3, 3))
    hess = hess @ np.swapaxes(hess, 1, 2)
    a, b = rng.standard_normal((6, 6)), rng.standard_normal((4, 4))
    sym = v_small.T @ v_small
    return [
        ("gram 3000x24", lambda k: k.gram(v_small)),
        ("gram 100000x59", lambda k: k.gram(v_large)),
        ("sandwich 100x3x59", lambda k: k.sandwich_sum(jac, hess)),
        ("kron 6x6 (x) 4x4", lambda k: k.kron(a, b)),
        ("power iteration 24x24", lambda k: k.power_iteration(sym, np.ones(24), 10_000, 1e-10)),
    ]


def sweep(k):
    cfg = LossConfig("mse", "mean")
    net = mlp([5, 4, 4, 3], "relu", seed=1)
    data = synthetic_dataset(0, 100, 5, 3, cfg)
    saved = _kernels.active
    _kernels.active = k
    try:
        return mc_sweep_rows(net, data, cfg, [10, 100, 1000], range(5))
    finally:
        _kernels.active = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if _kernels.numba_kernels is None:
        raise SystemExit("numba is not installed; nothing to compare")
    backends = [_kernels.numba_kernels, _kernels.numpy_kernels]
    rng = np.random.default_rng(0)

    print(f"{'case':<24}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    cases = kernel_cases(rng) + [("mc sweep (end to end)", sweep)]
    for name, fn in cases:
        reps = 1 if fn is sweep else args.repeats
        t_nb, t_np = (best_of(lambda: fn(k), reps) for k in backends)
        print(f"{name:<24}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>10.1f}x")

    rows_nb, rows_np = sweep(backends[0]), sweep(backends[1])
    diff = max(abs(a[2] - b[2]) for a, b in zip(rows_nb, rows_np))
    print(f"max sweep residual difference between backends: {diff:.2e}")


if __name__ == "__main__":
    main()
