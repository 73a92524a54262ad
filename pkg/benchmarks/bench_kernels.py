"""Timing comparison of the compiled and pure-numpy kernel backends.

Run: python3 benchmarks/bench_kernels.py [--batch 32] [--repeats 5]
Each kernel is checked for agreement between backends before timing.
"""

import argparse
import time

import numpy as np

import selftarget._kernels_numba as knb
import selftarget._kernels_numpy as knp


def timeit(fn, args, repeats):
    fn(*args)                       # warm-up (and numba compile)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(u, v) for u, v in zip(a, b))
    if a.dtype.kind in "iu":
        return np.array_equal(a, b)
    # backends sum in different orders; tolerance scales with the values
    scale = max(1.0, float(np.abs(a).max()))
    return np.allclose(a, b, rtol=1e-4, atol=1e-5 * scale)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    B = args.batch
    x = rng.standard_normal((B, 32, 14, 14)).astype(np.float32)
    w = rng.standard_normal((128, 32, 3, 3)).astype(np.float32)
    b = rng.standard_normal(128).astype(np.float32)
    y = knp.conv2d_forward(x, w, b, 1, 1)
    dy = rng.standard_normal(y.shape).astype(np.float32)
    yp, idx = knp.maxpool2d_forward(x, 4, 1, 2)
    dyp = rng.standard_normal(yp.shape).astype(np.float32)

    cases = [
        ("conv2d forward", knp.conv2d_forward, knb.conv2d_forward,
         (x, w, b, 1, 1)),
        ("conv2d backward", knp.conv2d_backward, knb.conv2d_backward,
         (x, w, dy, 1, 1)),
        ("maxpool forward", knp.maxpool2d_forward, knb.maxpool2d_forward,
         (x, 4, 1, 2)),
        ("maxpool backward", knp.maxpool2d_backward, knb.maxpool2d_backward,
         (x, idx, dyp, 4, 1, 2)),
        ("avgpool forward", knp.avgpool2d_forward, knb.avgpool2d_forward,
         (x, 4, 1, 2)),
        ("avgpool backward", knp.avgpool2d_backward, knb.avgpool2d_backward,
         (x, dyp, 4, 1, 2)),
    ]

    print(f"batch={B}, best of {args.repeats}")
    print(f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>8}  match")
    for name, f_np, f_nb, a in cases:
        if not agree(f_np(*a), f_nb(*a)):
            print(f"{name:<18} BACKEND MISMATCH")
            continue
        t_np = timeit(f_np, a, args.repeats)
        t_nb = timeit(f_nb, a, args.repeats)
        print(f"{name:<18} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
              f"{t_np / t_nb:>7.2f}x  ok")


if __name__ == "__main__":
    main()
