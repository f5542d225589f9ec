"""Differencing tests and the stepwise AICc search over SARIMA orders."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .sarima import FittedSarima, SarimaError, SarimaSpec, difference, fit

log = logging.getLogger(__name__)


class SelectionError(RuntimeError):
    pass


@lru_cache(maxsize=1)
def critical_values() -> dict:
    """The Monte Carlo critical-value tables shipped with the package."""
    text = resources.files("firmshock").joinpath("data/critical_values.json").read_text()
    return json.loads(text)


def _level_key(level):
    return f"{level:g}"


@dataclass(frozen=True)
class UnitRootResult:
    statistic: float
    critical_value: float
    level: float = 0.05
    lags: int = 0

    @property
    def decision(self) -> str:
        return "NonStationary" if self.statistic > self.critical_value else "Stationary"

    @property
    def stationary(self) -> bool:
        return self.decision == "Stationary"


@dataclass(frozen=True)
class SeasonalStabilityResult:
    statistic: float
    critical_value: float
    level: float = 0.05
    lags: int = 0

    @property
    def decision(self) -> str:
        return "UnstableSeasonality" if self.statistic > self.critical_value else "StableSeasonality"


def _bartlett_lrv(u, lags):
    """Newey-West long-run covariance of the rows of ``u`` (n x k), divisor n."""
    n = u.shape[0]
    omega = u.T @ u / n
    for k in range(1, lags + 1):
        g = u[k:].T @ u[:-k] / n
        omega = omega + (1.0 - k / (lags + 1.0)) * (g + g.T)
    return omega


def kpss_test(series, trend="level", level=0.05, lags=None) -> UnitRootResult:
    """KPSS stationarity test with a Bartlett long-run variance."""
    y = np.asarray(getattr(series, "values", series), dtype=float)
    n = len(y)
    if n < 12:
        raise SelectionError("KPSS needs at least 12 observations")
    if trend not in ("level", "trend"):
        raise ValueError("trend must be 'level' or 'trend'")
    if lags is None:
        lags = int(math.floor(4.0 * (n / 100.0) ** 0.25))
    cv = critical_values()["kpss"][trend][_level_key(level)]
    e = y - y.mean()
    if trend == "trend":
        t = np.arange(n) - (n - 1) / 2.0
        e = e - t * (e @ t) / (t @ t)
    if np.max(np.abs(e)) <= 1e-12 * max(1.0, np.max(np.abs(y))):
        return UnitRootResult(0.0, cv, level, lags)
    s = np.cumsum(e)
    lrv = float(_bartlett_lrv(e[:, None], lags)[0, 0])
    stat = float(s @ s / (n * n * lrv)) if lrv > 0 else math.inf
    return UnitRootResult(stat, cv, level, lags)


def select_d(series, max_d=1, level=0.05, trend="level") -> int:
    """Smallest d <= max_d whose differenced series KPSS accepts as stationary."""
    y = np.asarray(getattr(series, "values", series), dtype=float)
    for d in range(max_d + 1):
        w = difference(y, d, 0, 1) if d else y
        if len(w) < 12 or kpss_test(w, trend=trend, level=level).stationary:
            return d
    return max_d


def seasonal_regressors(n, m):
    """The m-1 trigonometric seasonal regressors for t = 1..n."""
    t = np.arange(1, n + 1)
    cols = []
    for j in range(1, m // 2 + 1):
        cols.append(np.cos(2 * np.pi * j * t / m))
        if 2 * j != m:
            cols.append(np.sin(2 * np.pi * j * t / m))
    return np.column_stack(cols)


def canova_hansen_test(series, m, level=0.05, lags=None) -> SeasonalStabilityResult:
    """Canova-Hansen test of the null that the seasonal pattern is stable."""
    y = np.asarray(getattr(series, "values", series), dtype=float)
    n = len(y)
    if m < 2:
        raise SelectionError("seasonal stability needs m >= 2")
    if n < 2 * m:
        raise SelectionError(f"need at least {2 * m} observations, got {n}")
    if lags is None:
        # A window reaching toward lag m soaks up the very seasonal persistence
        # under test, so the short KPSS-style truncation is used instead.
        lags = int(math.floor(4.0 * (n / 100.0) ** 0.25))
    lags = min(lags, n - 1)
    cv = critical_values()["canova_hansen"]["df"][str(m - 1)][_level_key(level)]
    S = seasonal_regressors(n, m)
    X = np.column_stack((np.ones(n), S))
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ beta
    if np.max(np.abs(e)) <= 1e-12 * max(1.0, np.max(np.abs(y))):
        return SeasonalStabilityResult(0.0, cv, level, lags)
    u = S * e[:, None]
    Fh = np.cumsum(u, axis=0)
    omega = _bartlett_lrv(u, lags)
    try:
        stat = float(np.trace(np.linalg.solve(omega, Fh.T @ Fh)) / (n * n))
    except np.linalg.LinAlgError:
        stat = 0.0
    return SeasonalStabilityResult(stat, cv, level, lags)


def select_D(series, m, max_D=1, level=0.05) -> int:
    """1 when the seasonal pattern is unstable (capped at ``max_D``), else 0."""
    y = np.asarray(getattr(series, "values", series), dtype=float)
    if m < 2 or max_D < 1 or len(y) < 2 * m:
        return 0
    res = canova_hansen_test(y, m, level=level)
    return 1 if res.decision == "UnstableSeasonality" else 0


# -- stepwise search -------------------------------------------------------

@dataclass
class SearchTrace:
    visited: list = field(default_factory=list)  # (spec, aicc, status)
    path: list = field(default_factory=list)  # accepted incumbents, in order
    stop_reason: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["order", "p", "d", "q", "P", "D", "Q", "m", "constant", "aicc", "status", "accepted"])
        accepted = set(self.path)
        for i, (spec, score, status) in enumerate(self.visited):
            w.writerow([i, spec.p, spec.d, spec.q, spec.P, spec.D, spec.Q, spec.m,
                        int(spec.with_constant), f"{score:.10g}", status, int(spec in accepted)])
        w.writerow([])
        w.writerow(["# stop_reason", self.stop_reason])
        return buf.getvalue()


@dataclass(frozen=True)
class SearchBounds:
    max_p: int = 5
    max_q: int = 5
    max_P: int = 2
    max_Q: int = 2
    max_d: int = 1
    max_D: int = 1
    max_order: int | None = None  # cap on p + q + P + Q

    def admits(self, p, q, P, Q) -> bool:
        if p > self.max_p or q > self.max_q or P > self.max_P or Q > self.max_Q:
            return False
        return self.max_order is None or p + q + P + Q <= self.max_order


def _rank(spec, score):
    return (score, spec.n_params, (spec.p, spec.q, spec.P, spec.Q, spec.with_constant))


def _clip(spec, b, m):
    seasonal = m > 1
    return SarimaSpec(
        min(spec.p, b.max_p), spec.d, min(spec.q, b.max_q),
        min(spec.P, b.max_P) if seasonal else 0, spec.D,
        min(spec.Q, b.max_Q) if seasonal else 0, m, spec.with_constant,
    )


def start_set(d, D, m, bounds: SearchBounds, allow_constant=True):
    base = [(2, 2, 1, 1), (0, 0, 0, 0), (1, 0, 1, 0), (0, 1, 0, 1)]
    out = []
    consts = (True, False) if allow_constant else (False,)
    for p, q, P, Q in base:
        for c in consts:
            s = _clip(SarimaSpec(p, d, q, P if m > 1 else 0, D, Q if m > 1 else 0, m, c), bounds, m)
            if not bounds.admits(s.p, s.q, s.P, s.Q):
                continue
            if s not in out:
                out.append(s)
    return out


def neighbours(spec: SarimaSpec, bounds: SearchBounds, allow_constant=True):
    """Single and paired +/-1 order moves, plus toggling the constant."""
    moves = []
    for dp, dq, dP, dQ in (
        (-1, 0, 0, 0), (1, 0, 0, 0), (0, -1, 0, 0), (0, 1, 0, 0),
        (0, 0, -1, 0), (0, 0, 1, 0), (0, 0, 0, -1), (0, 0, 0, 1),
        (-1, -1, 0, 0), (1, 1, 0, 0), (0, 0, -1, -1), (0, 0, 1, 1),
    ):
        p, q, P, Q = spec.p + dp, spec.q + dq, spec.P + dP, spec.Q + dQ
        if min(p, q, P, Q) < 0 or not bounds.admits(p, q, P, Q):
            continue
        if spec.m == 1 and (P or Q):
            continue
        moves.append(SarimaSpec(p, spec.d, q, P, spec.D, Q, spec.m, spec.with_constant))
    if allow_constant:
        moves.append(SarimaSpec(spec.p, spec.d, spec.q, spec.P, spec.D, spec.Q, spec.m,
                                not spec.with_constant))
    return moves


def score_spec(y, spec):
    """Fit ``spec``; failed or non-converged fits score +inf."""
    try:
        f = fit(y, spec)
    except (SarimaError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return None, math.inf, f"failed: {exc.__class__.__name__}"
    if not f.converged:
        return f, math.inf, "not converged"
    return f, f.aicc, "ok"


def stepwise_search(series, m=None, d=None, D=None, bounds: SearchBounds = SearchBounds(),
                    budget=250, extra_starts=()) -> tuple[FittedSarima, SearchTrace]:
    """Greedy AICc descent over SARIMA orders with fixed differencing.

    ``d``/``D`` default to :func:`select_d` / :func:`select_D`.  The start set
    is always evaluated in full; ``budget`` caps the total number of fits.
    """
    y = np.asarray(getattr(series, "values", series), dtype=float)
    if m is None:
        m = getattr(series, "m", 1)
    if D is None:
        D = select_D(y, m, bounds.max_D)
    if d is None:
        d = select_d(difference(y, 0, D, m) if D else y, bounds.max_d)
    allow_constant = d + D < 2
    trace = SearchTrace()
    cache = {}

    def evaluate(spec):
        if spec not in cache:
            f, score, status = score_spec(y, spec)
            cache[spec] = (f, score)
            trace.visited.append((spec, score, status))
        return cache[spec][1]

    starts = list(extra_starts) + [s for s in start_set(d, D, m, bounds, allow_constant)
                                   if s not in extra_starts]
    for s in starts:
        evaluate(s)
    best = min(starts, key=lambda s: _rank(s, cache[s][1]))
    trace.path.append(best)
    trace.stop_reason = "no improving neighbour"
    while True:
        cands = [s for s in neighbours(best, bounds, allow_constant) if s.d == d and s.D == D]
        new_best = best
        exhausted = False
        for s in cands:
            if s not in cache and len(cache) >= budget:
                exhausted = True
                break
            evaluate(s)
            if _rank(s, cache[s][1]) < _rank(new_best, cache[new_best][1]) and \
                    cache[s][1] < cache[best][1]:
                new_best = s
        if new_best != best:
            best = new_best
            trace.path.append(best)
            if exhausted:
                trace.stop_reason = "budget exhausted"
                break
            continue
        if exhausted:
            trace.stop_reason = "budget exhausted"
        break
    f, score = cache[best]
    if not math.isfinite(score):
        raise SelectionError("no admissible model")
    log.debug("selected %s (AICc %.3f) after %d fits", best, score, len(cache))
    return f, trace


def auto_sarima(series, m=None, bounds: SearchBounds = SearchBounds(), budget=250):
    """Choose D (Canova-Hansen), then d (KPSS), then orders by stepwise AICc."""
    return stepwise_search(series, m=m, bounds=bounds, budget=budget)
