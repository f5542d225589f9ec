"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once to trigger compilation, then timed with
``timeit``; outputs of the two backends are checked for agreement.
"""
import argparse
import timeit

import numpy as np

from firmshock.kernels import loops, vectorized
from firmshock.sarima import SarimaSpec, simulate


def _cases(rng):
    y = simulate(SarimaSpec(1, 0, 1, 1, 0, 1, 12), phi=[0.5], theta=[0.3], Phi=[0.4], Theta=[-0.3],
                 n=240, seed=1)
    ar = np.zeros(13)
    ar[0], ar[11], ar[12] = 0.5, 0.4, -0.2
    ma = np.zeros(13)
    ma[0], ma[11], ma[12] = -0.3, 0.3, -0.09
    r = 14
    P0 = loops.arma_stationary_cov(ar, ma, r)
    a = rng.integers(97, 123, 12).astype(np.int64)
    b = rng.integers(97, 123, 11).astype(np.int64)
    x = np.cumsum(rng.normal(size=200))
    seg = rng.normal(size=300)
    return {
        "arma_stationary_cov (r=14)": ("arma_stationary_cov", (ar, ma, r)),
        "arma_filter (n=240, r=14)": ("arma_filter", (y.values, ar, ma, P0)),
        "levenshtein_codes (12x11)": ("levenshtein_codes", (a, b)),
        "segment_dp (n=300, 3 breaks)": ("segment_dp", (seg, 3, 15)),
        "pettitt_u (n=200)": ("pettitt_u", (x,)),
        "za_tstats (n=200, lags=4)": ("za_tstats", (x, 0, 4, 30, 170)),
    }


def _same(u, v):
    if isinstance(u, tuple):
        return all(_same(a, b) for a, b in zip(u, v))
    return np.allclose(np.asarray(u, float), np.asarray(v, float), rtol=1e-8, atol=1e-10, equal_nan=True)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=0, help="calls per repeat (0 = auto)")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(7)
    print(f"{'kernel':<32}{'numba (us)':>12}{'numpy (us)':>12}{'speedup':>9}  agree")
    for label, (name, call_args) in _cases(rng).items():
        fa, fb = getattr(loops, name), getattr(vectorized, name)
        ra, rb = fa(*call_args), fb(*call_args)  # warm-up / compile
        times = []
        for f in (fa, fb):
            t = timeit.Timer(lambda f=f: f(*call_args))
            number = args.number or max(1, t.autorange()[0])
            times.append(min(t.repeat(args.repeat, number)) / number * 1e6)
        print(f"{label:<32}{times[0]:>12.1f}{times[1]:>12.1f}{times[1] / times[0]:>8.1f}x  {_same(ra, rb)}")


if __name__ == "__main__":
    main()
