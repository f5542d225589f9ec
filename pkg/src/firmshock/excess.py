"""Counterfactual forecasts over an evaluation window and the resulting excess.

Excess is reported as ``actual - forecast`` by default (positive means more
events than projected).  The other convention, ``forecast - actual``, is
available and recorded in every report header.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .months import YearMonth, parse_window
from .sarima import MonthlySeries, SarimaError, SarimaSpec, fit, forecast, z_value
from .selection import SearchBounds, stepwise_search

ACTUAL_MINUS_FORECAST = "actual_minus_forecast"
FORECAST_MINUS_ACTUAL = "forecast_minus_actual"
CONVENTIONS = (ACTUAL_MINUS_FORECAST, FORECAST_MINUS_ACTUAL)


class AlignmentError(ValueError):
    pass


def _window(w):
    if isinstance(w, str):
        return parse_window(w)
    a, b = w
    return YearMonth.parse(a), YearMonth.parse(b)


@dataclass
class CounterfactualConfig:
    train: tuple = ("2011-01", "2020-01")
    eval: tuple = ("2020-03", "2021-06")
    levels: tuple = (80, 95)
    convention: str = ACTUAL_MINUS_FORECAST
    bounds: SearchBounds = field(default_factory=SearchBounds)
    budget: int = 250
    spec: SarimaSpec | None = None  # skip the search and fit this spec
    mean_uncertainty: bool = True

    def __post_init__(self):
        self.train = _window(self.train)
        self.eval = _window(self.eval)
        if self.train[0] > self.train[1] or self.eval[0] > self.eval[1]:
            raise ValueError("windows must run forwards")
        if not self.train[1] < self.eval[0]:
            raise ValueError("training window must end before the evaluation window starts")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        self.levels = tuple(sorted(self.levels))


def _sign(convention):
    return 1.0 if convention == ACTUAL_MINUS_FORECAST else -1.0


def excess_series(actual, forecast_values, convention=ACTUAL_MINUS_FORECAST):
    """Elementwise signed difference of two aligned monthly series."""
    if isinstance(actual, MonthlySeries) and isinstance(forecast_values, MonthlySeries):
        if actual.start != forecast_values.start:
            raise AlignmentError(f"start months differ: {actual.start} vs {forecast_values.start}")
    a = np.asarray(getattr(actual, "values", actual), dtype=float)
    f = np.asarray(getattr(forecast_values, "values", forecast_values), dtype=float)
    if a.shape != f.shape:
        raise AlignmentError(f"lengths differ: {a.shape} vs {f.shape}")
    return _sign(convention) * (a - f)


@dataclass
class ExcessReport:
    stratum: str
    months: list
    actual: np.ndarray
    forecast: np.ndarray
    excess: np.ndarray
    cov: np.ndarray  # forecast-error covariance over the evaluation months
    levels: tuple
    convention: str
    spec: SarimaSpec | None = None
    aicc: float = math.nan
    header: dict = field(default_factory=dict)

    @property
    def sd(self):
        return np.sqrt(np.diag(self.cov))

    @property
    def cumulative(self):
        return np.cumsum(self.excess)

    @property
    def cumulative_sd(self):
        # variance of a running sum uses the full (correlated) covariance block
        c = np.cumsum(np.cumsum(self.cov, axis=0), axis=1)
        return np.sqrt(np.clip(np.diag(c), 0.0, None))

    def bounds(self, level, cumulative=False):
        z = z_value(level)
        centre = self.cumulative if cumulative else self.excess
        sd = self.cumulative_sd if cumulative else self.sd
        return centre - z * sd, centre + z * sd

    def forecast_bounds(self, level):
        z = z_value(level)
        return self.forecast - z * self.sd, self.forecast + z * self.sd

    def flipped(self) -> "ExcessReport":
        other = FORECAST_MINUS_ACTUAL if self.convention == ACTUAL_MINUS_FORECAST else ACTUAL_MINUS_FORECAST
        return ExcessReport(self.stratum, list(self.months), self.actual, self.forecast,
                            -self.excess, self.cov, self.levels, other, self.spec, self.aicc,
                            {**self.header, "convention": other})

    def columns(self):
        cols = {
            "month": [str(m) for m in self.months],
            "actual": self.actual,
            "forecast": self.forecast,
            "excess": self.excess,
        }
        for lv in self.levels:
            lo, hi = self.forecast_bounds(lv)
            cols[f"forecast_lower_{lv}"], cols[f"forecast_upper_{lv}"] = lo, hi
        for lv in self.levels:
            lo, hi = self.bounds(lv)
            cols[f"excess_lower_{lv}"], cols[f"excess_upper_{lv}"] = lo, hi
        cols["cumulative_excess"] = self.cumulative
        for lv in self.levels:
            lo, hi = self.bounds(lv, cumulative=True)
            cols[f"cumulative_lower_{lv}"], cols[f"cumulative_upper_{lv}"] = lo, hi
        return cols

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for k, v in self.header.items():
            buf.write(f"# {k}: {v}\n")
        cols = self.columns()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(cols))
        for i in range(len(self.months)):
            w.writerow([c[i] if isinstance(c[i], str) else _fmt(c[i]) for c in cols.values()])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _fmt(x):
    return f"{float(x):.10g}"


def run_counterfactual(series: MonthlySeries, config: CounterfactualConfig | None = None,
                       stratum="all") -> ExcessReport:
    """Select and fit on the training window, forecast through the evaluation window."""
    config = config or CounterfactualConfig()
    (t0, t1), (e0, e1) = config.train, config.eval
    if series.start > t0 or series.end < t1:
        raise SarimaError(f"series {series.start}..{series.end} does not cover training window {t0}..{t1}")
    if series.end < e1:
        raise SarimaError(f"series ends {series.end}, before the evaluation window end {e1}")
    train = series.window(t0, t1)
    if config.spec is not None:
        fitted = fit(train, config.spec)
        if not fitted.converged:
            raise SarimaError(f"fit of {config.spec} did not converge")
    else:
        fitted, _ = stepwise_search(train, m=series.m, bounds=config.bounds, budget=config.budget)
    horizon = e1 - t1
    fc = forecast(fitted, horizon, config.levels, mean_uncertainty=config.mean_uncertainty)
    i0 = e0 - t1 - 1
    mean = fc.mean[i0:]
    cov = fc.cov[i0:, i0:]
    actual = series.window(e0, e1).values
    exc = excess_series(actual, mean, config.convention)
    header = {
        "stratum": stratum,
        "convention": config.convention,
        "train": f"{t0}:{t1}",
        "eval": f"{e0}:{e1}",
        "model": str(fitted.spec),
        "aicc": f"{fitted.aicc:.6f}",
        "levels": ",".join(str(lv) for lv in config.levels),
        "cumulative_interval": "sum of the joint forecast-error covariance over elapsed months",
    }
    return ExcessReport(stratum, month_list(e0, e1), actual, mean, exc, cov, config.levels,
                        config.convention, fitted.spec, fitted.aicc, header)


def month_list(a, b):
    return [a + i for i in range(b - a + 1)]


@dataclass
class QuarterRow:
    quarter: str
    months: int
    actual: float
    forecast: float
    excess: float
    bounds: dict  # level -> (lower, upper)
    partial: bool


def quarterly_rollup(report: ExcessReport):
    """Calendar-quarter sums; bounds come from the summed covariance block."""
    groups = {}
    for i, m in enumerate(report.months):
        groups.setdefault((m.year, m.quarter), []).append(i)
    rows = []
    for (year, q), idx in sorted(groups.items()):
        idx = np.array(idx)
        var = float(report.cov[np.ix_(idx, idx)].sum())
        sd = math.sqrt(max(var, 0.0))
        exc = float(report.excess[idx].sum())
        b = {lv: (exc - z_value(lv) * sd, exc + z_value(lv) * sd) for lv in report.levels}
        rows.append(QuarterRow(f"{year}-Q{q}", len(idx), float(report.actual[idx].sum()),
                               float(report.forecast[idx].sum()), exc, b, len(idx) < 3))
    return rows


def write_quarterly(path, rows, levels=(80, 95)):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["quarter", "months", "partial", "actual", "forecast", "excess"]
        for lv in levels:
            head += [f"excess_lower_{lv}", f"excess_upper_{lv}"]
        w.writerow(head)
        for r in rows:
            line = [r.quarter, r.months, int(r.partial), _fmt(r.actual), _fmt(r.forecast), _fmt(r.excess)]
            for lv in levels:
                line += [_fmt(r.bounds[lv][0]), _fmt(r.bounds[lv][1])]
            w.writerow(line)
