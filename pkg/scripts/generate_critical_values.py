#!/usr/bin/env python3
"""Regenerate src/firmshock/data/critical_values.json by Monte Carlo.

KPSS (level and trend): the statistic computed on iid Gaussian samples of
length ``--kpss-n`` with known (lag-0) long-run variance, 10^6 replications.
The level case is cross-checked against the Karhunen-Loeve expansion of the
Brownian-bridge functional.

Canova-Hansen: the von Mises distribution with k degrees of freedom, a sum of
k independent Brownian-bridge functionals, each drawn from its
Karhunen-Loeve series.

Zivot-Andrews: the minimum break-date t statistic on Gaussian random walks.

Usage: python scripts/generate_critical_values.py [--reps 1000000] [--seed 20200301]
"""
import argparse
import json
import pathlib
import time

import numpy as np

from firmshock import kernels

LEVELS = (0.10, 0.05, 0.025, 0.01)
OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "firmshock" / "data" / "critical_values.json"


def kpss_null(rng, reps, n, trend, batch=4000):
    t = np.arange(1, n + 1, dtype=float)
    tc = t - t.mean()
    out = np.empty(reps)
    done = 0
    while done < reps:
        b = min(batch, reps - done)
        e = rng.standard_normal((b, n))
        resid = e - e.mean(axis=1, keepdims=True)
        if trend:
            slope = resid @ tc / (tc @ tc)
            resid = resid - slope[:, None] * tc[None, :]
        s = np.cumsum(resid, axis=1)
        lrv = np.mean(resid * resid, axis=1)
        out[done : done + b] = np.sum(s * s, axis=1) / (n * n * lrv)
        done += b
    return out


def bridge_kl(rng, size, terms=60):
    k = np.arange(1, terms + 1)
    w = 1.0 / (k * np.pi) ** 2
    tail = 1.0 / 6.0 - w.sum()  # sum over all k of 1/(k pi)^2 is 1/6
    out = np.empty(size)
    step = 20000
    for i in range(0, size, step):
        b = min(step, size - i)
        z = rng.standard_normal((b, terms))
        out[i : i + b] = (z * z) @ w + tail
    return out


def za_null(rng, reps, n, model, trim=0.15):
    lo, hi = int(np.ceil(trim * n)), int(np.floor((1 - trim) * n))
    out = np.empty(reps)
    for i in range(reps):
        y = np.cumsum(rng.standard_normal(n))
        out[i] = np.nanmin(kernels.za_tstats(y, model, 0, lo, hi))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=1_000_000)
    ap.add_argument("--kpss-n", type=int, default=500)
    ap.add_argument("--za-reps", type=int, default=20_000)
    ap.add_argument("--za-n", type=int, default=200)
    ap.add_argument("--max-ch-df", type=int, default=12)
    ap.add_argument("--seed", type=int, default=20200301)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    upper = lambda x: {f"{lv:g}": float(np.quantile(x, 1 - lv)) for lv in LEVELS}
    lower = lambda x: {f"{lv:g}": float(np.quantile(x, lv)) for lv in LEVELS}

    t0 = time.time()
    level = kpss_null(rng, args.reps, args.kpss_n, trend=False)
    trend = kpss_null(rng, args.reps, args.kpss_n, trend=True)
    kl = bridge_kl(rng, args.reps)
    print(f"kpss done in {time.time() - t0:.0f}s")
    print("  level (simulated):", upper(level))
    print("  level (KL series):", upper(kl))
    print("  trend (simulated):", upper(trend))

    ch = {}
    for k in range(1, args.max_ch_df + 1):
        draws = sum(bridge_kl(rng, args.reps) for _ in range(k))
        ch[str(k)] = upper(draws)
    print(f"canova-hansen done in {time.time() - t0:.0f}s")

    za = {}
    for name, code in (("intercept", 0), ("trend", 1), ("both", 2)):
        za[name] = lower(za_null(rng, args.za_reps, args.za_n, code))
        print("  za", name, za[name])
    print(f"zivot-andrews done in {time.time() - t0:.0f}s")

    doc = {
        "generator": "scripts/generate_critical_values.py",
        "seed": args.seed,
        "kpss": {
            "replications": args.reps,
            "n": args.kpss_n,
            "level": upper(level),
            "trend": upper(trend),
        },
        "canova_hansen": {"replications": args.reps, "df": ch},
        "zivot_andrews": {"replications": args.za_reps, "n": args.za_n, "trim": 0.15, **za},
    }
    OUT.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print("wrote", OUT)


if __name__ == "__main__":
    main()
