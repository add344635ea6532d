"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 50]

Both paths are called directly, so AHP_EVAL_DISABLE_NUMBA has no effect here.
Outputs are checked for agreement before anything is timed.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from ahp_eval import _kernels
from ahp_eval.ahp import MAX_ITER, TOL


def reciprocal(rng: np.random.Generator, n: int) -> np.ndarray:
    upper = rng.choice([5.0, 3.0, 1.0, 1 / 3, 1 / 5], size=(n, n))
    iu = np.triu_indices(n, 1)
    a = np.ones((n, n))
    a[iu] = upper[iu]
    a[iu[1], iu[0]] = 1 / upper[iu]
    return a


def best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)

    print(f"{'kernel':<14}{'size':>8}{'numpy (ms)':>14}{'numba (ms)':>14}{'speedup':>10}")
    for n in (10, 20, 80, 200):
        a = reciprocal(rng, n)
        vn = _kernels.power_iteration_numpy(a, TOL, MAX_ITER)[0]
        vj = _kernels.power_iteration_numba(a, TOL, MAX_ITER)[0]  # also compiles
        assert np.allclose(vn, vj, atol=1e-12)
        tn = best(lambda: _kernels.power_iteration_numpy(a, TOL, MAX_ITER), args.repeat)
        tj = best(lambda: _kernels.power_iteration_numba(a, TOL, MAX_ITER), args.repeat)
        print(f"{'power_iter':<14}{n:>8}{tn * 1e3:>14.4f}{tj * 1e3:>14.4f}{tn / tj:>9.1f}x")

    for n in (20, 80, 500, 2000):
        f = rng.integers(0, 50, n).astype(np.float64)
        g = rng.permutation(n).astype(np.float64)
        cn = _kernels.concordance_counts_numpy(f, g, 20.0, True)
        cj = _kernels.concordance_counts_numba(f, g, 20.0, True)
        assert tuple(cn) == tuple(cj)
        tn = best(lambda: _kernels.concordance_counts_numpy(f, g, 20.0, True), args.repeat)
        tj = best(lambda: _kernels.concordance_counts_numba(f, g, 20.0, True), args.repeat)
        print(f"{'concordance':<14}{n:>8}{tn * 1e3:>14.4f}{tj * 1e3:>14.4f}{tn / tj:>9.1f}x")


if __name__ == "__main__":
    main()
