"""Time the counter-based GUE sampler with and without numba.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from freeentropy import _kernels

CASES = [(8, 1, 20_000), (20, 2, 5_000), (64, 1, 1_000), (150, 2, 100)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba not installed; only the numpy path is timed")
    print(f"{'n':>5} {'m':>3} {'samples':>8} {'numpy s':>10} {'numba s':>10} {'speedup':>8}")
    for n, m, count in CASES:
        run = lambda use: _kernels.gue_batch(1, n, m, 0, count, use_numba=use)
        t_np = min(timeit.repeat(lambda: run(False), number=1, repeat=args.repeat))
        if _kernels.HAVE_NUMBA:
            run(True)  # compile outside the timed region
            t_nb = min(timeit.repeat(lambda: run(True), number=1, repeat=args.repeat))
            assert np.allclose(run(True)[:4], run(False)[:4], rtol=0, atol=1e-14)
            print(f"{n:>5} {m:>3} {count:>8} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{n:>5} {m:>3} {count:>8} {t_np:>10.4f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
