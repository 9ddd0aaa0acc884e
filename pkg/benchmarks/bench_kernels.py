"""Timing comparison for the pixel kernels: numba backend vs plain numpy.

Run as a script:

    python3 benchmarks/bench_kernels.py --size 600 --reps 30

Both backends are checked for agreement before timing. Without numba
installed only the numpy column is reported.
"""

import argparse
import time

import numpy as np

from chartforge.kernels import (
    HAS_NUMBA,
    _erode_square_nb,
    _erode_square_np,
    _mask_overlap_nb,
    _mask_overlap_np,
    _min_dist_sq_nb,
    _min_dist_sq_np,
    _rle_counts_nb,
    _rle_counts_np,
)


def timed(fn, args, reps):
    fn(*args)  # warm-up (and JIT compile for the numba twins)
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def make_inputs(size, rng):
    mask = rng.random((size, size)) < 0.4
    other = rng.random((size, size)) < 0.4
    flat = np.ascontiguousarray(mask.ravel())
    ys, xs = np.nonzero(mask)
    ys = ys.astype(np.float64)
    xs = xs.astype(np.float64)
    return {
        "erode_square(r=4)": (
            _erode_square_np, _erode_square_nb,
            (np.ascontiguousarray(mask), 4)),
        "rle_counts": (_rle_counts_np, _rle_counts_nb, (flat,)),
        "min_dist_sq": (
            _min_dist_sq_np, _min_dist_sq_nb,
            (ys, xs, size / 2.0, size / 2.0)),
        "mask_overlap": (
            _mask_overlap_np, _mask_overlap_nb,
            (np.ascontiguousarray(mask), np.ascontiguousarray(other))),
    }


def check_agreement(name, np_fn, nb_fn, args):
    a = np_fn(*args)
    b = nb_fn(*args)
    if isinstance(a, np.ndarray):
        assert np.array_equal(a, b), name
    else:
        assert a == b or abs(a - b) < 1e-9, name


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=600,
                    help="mask side length in pixels")
    ap.add_argument("--reps", type=int, default=30,
                    help="repetitions per kernel; best time wins")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cases = make_inputs(args.size, rng)

    print(f"mask {args.size}x{args.size}, best of {args.reps} runs")
    if not HAS_NUMBA:
        print("numba not installed; numpy backend only")
    header = f"{'kernel':<20} {'numpy':>12}"
    if HAS_NUMBA:
        header += f" {'numba':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))

    for name, (np_fn, nb_fn, call_args) in cases.items():
        if HAS_NUMBA:
            if name == "mask_overlap":
                flat_args = (call_args[0].ravel(), call_args[1].ravel())
                assert np_fn(*call_args) == nb_fn(*flat_args)
                t_nb = timed(nb_fn, flat_args, args.reps)
            else:
                check_agreement(name, np_fn, nb_fn, call_args)
                t_nb = timed(nb_fn, call_args, args.reps)
        t_np = timed(np_fn, call_args, args.reps)
        line = f"{name:<20} {t_np * 1e3:>10.3f}ms"
        if HAS_NUMBA:
            line += f" {t_nb * 1e3:>10.3f}ms {t_np / t_nb:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
