"""Structural-break battery for monthly event series.

Five tests are provided: CUSUM on recursive residuals, Chow, Bai-Perron
mean-shift segmentation, Pettitt's rank test and Zivot-Andrews.  Break
dates are reported as the first month of the new regime.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernels
from .months import YearMonth
from .sarima import MonthlySeries
from .selection import critical_values

CUSUM_A5 = 0.948  # 5% crossing constant for the linear Brown-Durbin-Evans boundary
ZA_MODELS = {"intercept": 0, "trend": 1, "both": 2}
TESTS = ("cusum", "chow", "bai_perron", "pettitt", "zivot_andrews")


class BreakTestError(ValueError):
    pass


@dataclass
class BreakResult:
    test: str
    statistic: float
    break_dates: tuple = ()
    decision: str = "no break"
    p_value: float | None = None
    note: str = ""
    series: str = ""
    break_index: tuple = field(default=(), repr=False)

    @property
    def rejected(self) -> bool:
        return self.decision == "break"

    def row(self):
        """One row of the battery table."""
        pd = f"{self.p_value:.6g}" if self.p_value is not None else self.decision
        stat = "" if self.statistic is None or math.isnan(self.statistic) else f"{self.statistic:.6g}"
        return [self.series, self.test, stat, ";".join(str(d) for d in self.break_dates), pd, self.note]


def _as_series(series):
    if isinstance(series, MonthlySeries):
        return np.asarray(series.values, dtype=float), series.start
    return np.asarray(series, dtype=float), None


def _dates(start, idx):
    if start is None:
        return tuple(int(i) for i in idx)
    return tuple(start + int(i) for i in idx)


def _is_constant(y):
    return np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y))))


# -- CUSUM ---------------------------------------------------------------------

def recursive_residuals(y, X):
    """Standardized one-step recursive residuals ``w_r``, r = k..n-1."""
    n, k = X.shape
    out = np.empty(n - k)
    for r in range(k, n):
        Xr = X[:r]
        beta, *_ = np.linalg.lstsq(Xr, y[:r], rcond=None)
        xr = X[r]
        h = xr @ np.linalg.solve(Xr.T @ Xr, xr)
        out[r - k] = (y[r] - xr @ beta) / math.sqrt(1.0 + h)
    return out


def cusum_test(series, trend=False, a=CUSUM_A5) -> BreakResult:
    """CUSUM of recursive residuals against the 5% linear boundaries.

    The residual scale is estimated from successive differences of the
    recursive residuals, which stays close to the innovation scale when the
    mean shifts.  The statistic is the largest boundary-scaled excursion;
    crossings happen when it exceeds 1.
    """
    y, start = _as_series(series)
    n = len(y)
    if n < 10:
        raise BreakTestError("CUSUM needs at least 10 observations")
    if _is_constant(y):
        return BreakResult("cusum", 0.0, (), "no break", None, "constant series")
    X = np.ones((n, 1)) if not trend else np.column_stack((np.ones(n), np.arange(n, dtype=float)))
    k = X.shape[1]
    w = recursive_residuals(y, X)
    m = len(w)
    sigma = math.sqrt(np.sum(np.diff(w) ** 2) / (2.0 * (m - 1)))
    if sigma <= 0:
        return BreakResult("cusum", 0.0, (), "no break", None, "zero residual scale")
    W = np.cumsum(w) / sigma
    r = np.arange(1, m + 1)
    bound = a * (math.sqrt(m) + 2.0 * r / math.sqrt(m))
    ratio = np.abs(W) / bound
    cross = np.flatnonzero(ratio > 1.0)
    stat = float(ratio.max())
    if cross.size == 0:
        return BreakResult("cusum", stat, (), "no break", None)
    idx = int(cross[0]) + k
    return BreakResult("cusum", stat, _dates(start, [idx]), "break", None,
                       "first boundary crossing", break_index=(idx,))


# -- Chow ----------------------------------------------------------------------

def _ols_ssr(y, X):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ beta
    return float(e @ e)


def _design(n, model, offset=0):
    t = np.arange(offset, offset + n, dtype=float)
    return np.ones((n, 1)) if model == "mean" else np.column_stack((np.ones(n), t))


def chow_test(series, candidate, model="mean", level=0.05) -> BreakResult:
    """F test for a known break at ``candidate`` (first month of regime two).

    ``candidate`` is a year-month when ``series`` is a :class:`MonthlySeries`,
    otherwise a 0-based index.
    """
    y, start = _as_series(series)
    n = len(y)
    if model not in ("mean", "trend"):
        raise ValueError("model must be 'mean' or 'trend'")
    k = 1 if model == "mean" else 2
    if start is not None and not isinstance(candidate, (int, np.integer)):
        b = YearMonth.parse(candidate) - start
    else:
        b = int(candidate)
    if b < k + 1 or n - b < k + 1:
        raise BreakTestError(f"candidate {candidate} leaves a segment shorter than {k + 1}")
    if n - 2 * k <= 0:
        raise BreakTestError("series too short for the split regression")
    ssr_p = _ols_ssr(y, _design(n, model))
    ssr_1 = _ols_ssr(y[:b], _design(b, model))
    ssr_2 = _ols_ssr(y[b:], _design(n - b, model, b))
    ssr_u = ssr_1 + ssr_2
    df2 = n - 2 * k
    if ssr_u <= 1e-12 * max(ssr_p, 1.0):
        if ssr_p - ssr_u <= 1e-12 * max(1.0, float(y @ y)):
            return BreakResult("chow", 0.0, (), "no break", 1.0, "exact fit in both segments")
        return BreakResult("chow", math.inf, _dates(start, [b]), "break", 0.0,
                           "exact fit in both segments", break_index=(b,))
    F = ((ssr_p - ssr_u) / k) / (ssr_u / df2)
    p = float(stats.f.sf(F, k, df2))
    rejected = p < level
    return BreakResult("chow", float(F), _dates(start, [b]) if rejected else (),
                       "break" if rejected else "no break", p,
                       f"candidate {_dates(start, [b])[0]}", break_index=(b,) if rejected else ())


# -- Bai-Perron -----------------------------------------------------------------

@dataclass
class Segmentation:
    ssr: np.ndarray  # minimal SSR for 0..K breaks (inf where infeasible)
    bounds: list  # per k, start indices of the k new segments
    bic: np.ndarray
    h: int


def segmentation(y, max_breaks, h) -> Segmentation:
    """Globally optimal mean-shift segmentations for every break count."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    ssr, b = kernels.segment_dp(y, max_breaks, h)
    bounds = [tuple(int(i) for i in b[k, :k]) for k in range(max_breaks + 1)]
    floor = 1e-12 * max(1.0, float(np.sum((y - y.mean()) ** 2)))
    bic = np.full(max_breaks + 1, np.inf)
    for k in range(max_breaks + 1):
        if np.isfinite(ssr[k]):
            # k+1 segment means plus k break dates
            bic[k] = n * math.log(max(ssr[k], floor) / n) + (2 * k + 1) * math.log(n)
    return Segmentation(ssr, bounds, bic, h)


def bai_perron(series, max_breaks=2, min_segment=0.15) -> BreakResult:
    """Mean-shift break dates by dynamic programming, count chosen by BIC."""
    y, start = _as_series(series)
    n = len(y)
    h = int(math.floor(n * min_segment))
    if h < 3:
        raise BreakTestError(f"n * min_segment = {n * min_segment:.2f} < 3")
    note = ""
    feasible = n // h - 1
    if max_breaks > feasible:
        note = f"max_breaks clipped from {max_breaks} to {feasible}"
        max_breaks = feasible
    if _is_constant(y):
        return BreakResult("bai_perron", 0.0, (), "no break", None, note or "constant series")
    seg = segmentation(y, max_breaks, h)
    k = int(np.argmin(seg.bic))
    if k == 0:
        return BreakResult("bai_perron", 0.0, (), "no break", None, note)
    ssr0, ssrk = seg.ssr[0], seg.ssr[k]
    df2 = n - 2 * k - 1
    F = ((ssr0 - ssrk) / (2 * k)) / (ssrk / df2) if ssrk > 0 and df2 > 0 else math.inf
    idx = seg.bounds[k]
    note = "; ".join(x for x in (note, f"{k} break(s) by BIC") if x)
    return BreakResult("bai_perron", float(F), _dates(start, idx), "break", None, note,
                       break_index=idx)


# -- Pettitt -------------------------------------------------------------------

def pettitt_test(series, level=0.05) -> BreakResult:
    """Pettitt's rank change-point test with the usual exponential p-value bound."""
    y, start = _as_series(series)
    n = len(y)
    if n < 10:
        raise BreakTestError("Pettitt test needs at least 10 observations")
    U = kernels.pettitt_u(y)
    t = int(np.argmax(np.abs(U)))
    K = float(abs(U[t]))
    p = min(1.0, 2.0 * math.exp(-6.0 * K * K / (n ** 3 + n ** 2)))
    idx = t + 1
    rejected = p < level
    return BreakResult("pettitt", K, _dates(start, [idx]) if rejected else (),
                       "break" if rejected else "no break", p,
                       f"argmax at {_dates(start, [idx])[0]}", break_index=(idx,) if rejected else ())


# -- Zivot-Andrews -------------------------------------------------------------

def _adf_lags(y, max_lags):
    """Lag count for the augmented regression chosen by BIC on a common sample."""
    n = len(y)
    dy = np.diff(y)
    best, best_l = math.inf, 0
    start = max_lags + 1
    Y = dy[start - 1:]
    m = len(Y)
    for lags in range(max_lags + 1):
        cols = [np.ones(m), np.arange(start, n, dtype=float), y[start - 1:n - 1]]
        cols += [dy[start - 1 - j:n - 1 - j] for j in range(1, lags + 1)]
        X = np.column_stack(cols)
        ssr = _ols_ssr(Y, X)
        if ssr <= 0:
            return lags
        bic = m * math.log(ssr / m) + X.shape[1] * math.log(m)
        if bic < best - 1e-12:
            best, best_l = bic, lags
    return best_l


def zivot_andrews(series, model="intercept", lags=None, trim=0.15, level=0.05) -> BreakResult:
    """Minimum-t unit-root test allowing one break at an unknown date.

    Rejection means the series is stationary around a broken mean/trend; the
    break date is the argmin of the t statistic.
    """
    y, start = _as_series(series)
    n = len(y)
    if n < 30:
        raise BreakTestError("Zivot-Andrews needs at least 30 observations")
    if model not in ZA_MODELS:
        raise ValueError(f"model must be one of {sorted(ZA_MODELS)}")
    if _is_constant(y):
        return BreakResult("zivot_andrews", 0.0, (), "no break", None, "constant series")
    if lags is None:
        lags = _adf_lags(y, int(math.floor(4.0 * (n / 100.0) ** 0.25)))
    lo = max(int(math.ceil(trim * n)), lags + 2)
    hi = int(math.floor((1 - trim) * n))
    if hi <= lo:
        raise BreakTestError("trimming leaves no candidate break dates")
    tstats = kernels.za_tstats(y, ZA_MODELS[model], lags, lo, hi)
    if np.all(np.isnan(tstats)):
        raise BreakTestError("all candidate regressions are singular")
    j = int(np.nanargmin(tstats))
    stat = float(tstats[j])
    cv = critical_values()["zivot_andrews"][model][f"{level:g}"]
    idx = lo + j
    rejected = stat < cv
    note = f"lags={lags}; cv={cv:.4f}; candidate {_dates(start, [idx])[0]}"
    return BreakResult("zivot_andrews", stat, _dates(start, [idx]) if rejected else (),
                       "break" if rejected else "no break", None, note,
                       break_index=(idx,) if rejected else ())


# -- battery -------------------------------------------------------------------

def seasonally_adjust(series: MonthlySeries, train=None) -> MonthlySeries:
    """Subtract calendar-month means estimated on ``train`` (default: whole series)."""
    y = np.asarray(series.values, dtype=float)
    months = series.months
    if train is not None:
        lo, hi = (YearMonth.parse(x) for x in train)
        mask = np.array([lo <= mo <= hi for mo in months])
        if not mask.any():
            mask = np.ones(len(y), bool)
    else:
        mask = np.ones(len(y), bool)
    cal = np.array([mo.month for mo in months])
    means = np.zeros(13)
    for c in range(1, 13):
        sel = mask & (cal == c)
        means[c] = y[sel].mean() if sel.any() else y[mask].mean()
    return MonthlySeries(series.start, y - means[cal], series.m)


def _run_one(test, s, chow_candidate, max_breaks, za_model):
    if test == "cusum":
        return cusum_test(s)
    if test == "chow":
        return chow_test(s, chow_candidate)
    if test == "bai_perron":
        return bai_perron(s, max_breaks=max_breaks)
    if test == "pettitt":
        return pettitt_test(s)
    if test == "zivot_andrews":
        return zivot_andrews(s, model=za_model)
    raise ValueError(f"unknown test {test!r}")


def run_battery(series_set: dict, *, tests=TESTS, chow_candidate="2020-03", max_breaks=2,
                za_model="intercept", seasonal_train=None, adjust=True):
    """All tests on every series, raw and (optionally) seasonally adjusted.

    A failing test produces an ``error`` row and the battery carries on.
    """
    jobs = []
    for name in sorted(series_set):
        s = series_set[name]
        jobs.append((f"{name}", s))
        if adjust:
            jobs.append((f"{name}_sa", seasonally_adjust(s, seasonal_train)))
    out = []
    for name, s in jobs:
        for test in tests:
            try:
                res = _run_one(test, s, chow_candidate, max_breaks, za_model)
            except (BreakTestError, ValueError, np.linalg.LinAlgError) as exc:
                res = BreakResult(test, math.nan, (), "error", None, str(exc))
            res.series = name
            out.append(res)
    return out


BATTERY_COLUMNS = ["series", "test", "statistic", "break_date", "p_or_decision", "note"]


def write_battery(path, results):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BATTERY_COLUMNS)
        for r in results:
            w.writerow(r.row())
