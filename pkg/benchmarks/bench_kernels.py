"""Time the compiled projector kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --sizes 64 128 --repeat 5

Prints one row per (size, kernel) with the best wall time of each backend,
the speed-up, and the largest relative difference between their outputs.
"""

import argparse
import math
import sys
import timeit

import numpy as np

from lama_ct import _kernels_py

try:
    from lama_ct import _kernels
except ImportError:
    _kernels = None


def cases(n, views):
    rng = np.random.default_rng(n)
    n_det = int(math.ceil(math.sqrt(2.0) * n))
    thetas = np.arange(views) * (np.pi / views)
    img = rng.random((n, n))
    sino = rng.random((views, n_det))
    return {
        "joseph_forward": lambda k: k.joseph_forward(img, thetas, n_det, 1.0, 1.0),
        "joseph_adjoint": lambda k: k.joseph_adjoint(sino, thetas, n, 1.0, 1.0),
        "pixel_backproject": lambda k: k.pixel_backproject(sino, thetas, n, 1.0, 1.0),
    }


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--views-per-pixel", type=float, default=2.8, help="views = round(factor * size)")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if _kernels is None:
        print("compiled extension not built; only the numpy fallback is available", file=sys.stderr)
    print(f"{'size':>5} {'views':>5} {'kernel':<18} {'cython ms':>10} {'numpy ms':>10} {'speed-up':>9} {'max rel diff':>13}")
    for n in args.sizes:
        views = int(round(args.views_per_pixel * n))
        for name, run in cases(n, views).items():
            t_py = best_time(lambda: run(_kernels_py), args.repeat)
            ref = run(_kernels_py)
            if _kernels is None:
                print(f"{n:>5} {views:>5} {name:<18} {'-':>10} {1e3 * t_py:>10.2f} {'-':>9} {'-':>13}")
                continue
            t_cy = best_time(lambda: run(_kernels), args.repeat)
            diff = np.max(np.abs(run(_kernels) - ref)) / np.max(np.abs(ref))
            print(
                f"{n:>5} {views:>5} {name:<18} {1e3 * t_cy:>10.2f} {1e3 * t_py:>10.2f} "
                f"{t_py / t_cy:>8.1f}x {diff:>13.1e}"
            )


if __name__ == "__main__":
    main()
