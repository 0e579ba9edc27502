"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Shapes roughly match one SmoothTaylor chunk on a 3x64x64 input and one
perturbation-game ordering on a 224x224 map.  Compilation happens in a
warm-up call and is not timed.
"""

import argparse
import time

import numpy as np

from smoothtaylor import kernels
from smoothtaylor._accel import NUMBA_AVAILABLE


def cases(gen):
    x = gen.normal(size=(64, 3, 64, 64))
    w = gen.normal(size=(16, 3, 3, 3))
    y = kernels.conv2d_forward_numpy(x, w, np.zeros(16), 1, 1, 1, 1)
    g = gen.normal(size=y.shape)
    pooled, idx = kernels.maxpool2d_forward_numpy(y, 2, 2)
    gp = gen.normal(size=pooled.shape)
    s = gen.random((224, 224))
    means = kernels.window_sums_numpy(s, 15) / 225.0
    return {
        "conv2d_forward": (x, w, np.zeros(16), 1, 1, 1, 1),
        "conv2d_backward_input": (g, w, 64, 64, 1, 1, 1, 1),
        "maxpool2d_forward": (y, 2, 2),
        "maxpool2d_backward": (gp, idx, 64, 64),
        "window_sums": (s, 15),
        "greedy_select": (means, 15, 30),
        "blur5": (s,),
        "resize_bilinear": (s, 149, 149),
        "total_variation": (s,),
    }


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<24}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, call_args in cases(np.random.default_rng(0)).items():
        fast, slow = kernels.implementations(name)
        a, b = best_of(fast, call_args, args.repeat), best_of(slow, call_args, args.repeat)
        print(f"{name:<24}{a * 1e3:>10.2f}{b * 1e3:>10.2f}{b / a:>8.1f}x")


if __name__ == "__main__":
    main()
