"""Time the numba kernels against the numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--rows 200000]

Inputs are random but seeded; both paths are checked to agree before timing.
"""
import argparse
import timeit

import numpy as np

from radimpress import _kernels


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rows", type=int, default=200_000, help="label vectors in the distance scan")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(args.seed)
    cases = []
    for n, m in ((8, 12), (60, 60), (200, 180)):
        a, b = rng.integers(0, 30, n), rng.integers(0, 30, m)
        assert _kernels.lcs_length_numba(a, b) == _kernels.lcs_length_numpy(a, b)
        cases.append((f"lcs {n}x{m}", lambda a=a, b=b: _kernels.lcs_length_numba(a, b),
                      lambda a=a, b=b: _kernels.lcs_length_numpy(a, b), 200))
    mat = rng.choice(np.array([-1, 0, 1, 2], dtype=np.int8), size=(args.rows, 14))
    q = mat[0].copy()
    np.testing.assert_array_equal(_kernels.squared_distances_numba(mat, q), _kernels.squared_distances_numpy(mat, q))
    cases.append((f"distances {args.rows}x14", lambda: _kernels.squared_distances_numba(mat, q),
                  lambda: _kernels.squared_distances_numpy(mat, q), 5))

    print(f"{'kernel':<22}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, jit, ref, number in cases:
        jit()  # compile outside the timed region
        tj, tn = _best(jit, args.repeat, number), _best(ref, args.repeat, number)
        print(f"{name:<22}{tj * 1e6:>10.1f}us{tn * 1e6:>10.1f}us{tn / tj:>9.1f}x")


if __name__ == "__main__":
    main()
