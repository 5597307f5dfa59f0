"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N time for each backend and the
speed-up.  Inputs mirror one FFT-512 frame at the default rate.
"""

import argparse
import timeit

import numpy as np

from dmtsim import _kernels_py as py
from dmtsim.rxchain import _tables
from dmtsim.signalcore import constellation

try:
    from dmtsim import _kernels_c as c
except ImportError:
    c = None


def cases(rng):
    K, S = 242, 123
    orders = rng.integers(1, 7, K)
    scale = rng.uniform(0.7, 1.3, K)
    h0 = rng.uniform(0.5, 2, K) * np.exp(1j * rng.uniform(-3, 3, K))
    Y = h0 * (rng.standard_normal((S, K)) + 1j * rng.standard_normal((S, K)))
    tables, sizes = _tables()
    pts = constellation(6).points
    sym = rng.standard_normal(S * K) + 1j * rng.standard_normal(S * K)
    capture = rng.standard_normal(3 * 128 * 544)
    return {
        "nearest_label (64-QAM)": lambda m: m.nearest_label(sym, pts),
        "dd_equalize (123 x 242)": lambda m: m.dd_equalize(Y, h0, orders, scale, tables, sizes, 0.1),
        "sc_metric (3 frames)": lambda m: m.sc_metric(capture, 256),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if c is None:
        print("compiled kernels not built; only the fallback can be timed")
    print(f"{'kernel':<26}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if c is None:
            print(f"{name:<26}{t_py:>12.2f}{'-':>12}{'-':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(c), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{t_py:>12.2f}{t_c:>12.2f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
