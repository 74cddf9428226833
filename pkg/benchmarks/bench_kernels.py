"""Time the numba and numpy flavours of every kernel.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Prints the median wall time per call and the numpy/numba ratio.  The first
numba call (compilation or cache load) is excluded.
"""

import argparse
import time

import numpy as np

from tau_ppg import kernels
from tau_ppg._accel import HAS_NUMBA


def cases(rng):
    x = rng.standard_normal((16, 1000))
    w = rng.standard_normal((32, 16, 9))
    b = rng.standard_normal(32)
    g = rng.standard_normal((32, 1000))
    peaks = np.unique(rng.integers(0, 1000, 15))
    labels = rng.uniform(0, 40, 1000)
    pred = np.unique(rng.integers(0, 1000, 25))
    truth = np.unique(rng.integers(0, 1000, 25))
    return {
        "conv1d_forward": ((x, w, b, 2), {}),
        "conv1d_backward": ((x, w, g, 2), {}),
        "distance_transform": ((peaks, 1000), {}),
        "runs_below_argmin": ((labels, 7.5), {}),
        "nearest_k_peaks": ((1000, peaks, 6), {}),
        "greedy_match": ((pred, truth, 10), {}),
    }


def timeit(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba not installed; only the numpy flavour is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numpy (ms)':>12}{'numba (ms)':>12}{'ratio':>8}")
    for name, (a, _) in cases(rng).items():
        t_np = timeit(getattr(kernels, name + "_numpy"), a, args.repeat)
        if HAS_NUMBA:
            t_nb = timeit(getattr(kernels, name + "_numba"), a, args.repeat)
            print(f"{name:<20}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>8.2f}")
        else:
            print(f"{name:<20}{t_np * 1e3:>12.3f}{'-':>12}{'-':>8}")


if __name__ == "__main__":
    main()
