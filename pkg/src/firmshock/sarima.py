"""Seasonal ARIMA: differencing, exact Gaussian likelihood, fitting, forecasting.

Model, with ``B`` the backshift operator::

    Phi(B^m) phi(B) (1 - B^m)^D (1 - B)^d y_t = c + Theta(B^m) theta(B) e_t

``phi(B) = 1 - phi_1 B - ...`` and ``theta(B) = 1 + theta_1 B + ...`` (same for
the seasonal polynomials).  The differenced series ``w`` is an ARMA with mean
``mu``; ``c = mu * phi(1) * Phi(1)``.  Estimation maximises the exact
likelihood of ``w`` evaluated with a Kalman filter started from the
stationary state covariance, with sigma^2 concentrated out.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, stats

from . import kernels
from .months import YearMonth, month_range


class SarimaError(ValueError):
    """Raised for invalid specifications, data or parameters."""


class DegenerateSeriesError(SarimaError):
    """Innovation variance collapsed to zero (e.g. a constant series)."""


@dataclass(frozen=True)
class MonthlySeries:
    start: YearMonth
    values: np.ndarray
    m: int = 12

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) < 1:
            raise SarimaError("series must be a non-empty 1-d array")
        if self.m < 1:
            raise SarimaError("seasonal period must be >= 1")
        if np.isnan(vals).any():
            raise SarimaError("missing interior values are not supported")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "start", YearMonth.parse(self.start))

    def __len__(self):
        return len(self.values)

    @property
    def end(self) -> YearMonth:
        return self.start + (len(self.values) - 1)

    @property
    def months(self) -> list[YearMonth]:
        return month_range(self.start, self.end)

    def window(self, start, end) -> "MonthlySeries":
        start, end = YearMonth.parse(start), YearMonth.parse(end)
        if start < self.start or end > self.end:
            raise SarimaError(f"window {start}..{end} outside series {self.start}..{self.end}")
        i, j = start - self.start, end - self.start
        return MonthlySeries(start, self.values[i : j + 1], self.m)

    @classmethod
    def from_pairs(cls, pairs, m=12) -> "MonthlySeries":
        """Build from (month, value) pairs; leading/trailing blanks are trimmed."""
        rows = sorted((YearMonth.parse(k), v) for k, v in pairs)
        if not rows:
            raise SarimaError("empty series")
        vals = [None if v in (None, "") else float(v) for _, v in rows]
        months = [k for k, _ in rows]
        for a, b in zip(months, months[1:]):
            if b - a != 1:
                raise SarimaError(f"gap or duplicate between {a} and {b}")
        lo = next((i for i, v in enumerate(vals) if v is not None), None)
        if lo is None:
            raise SarimaError("series has no values")
        hi = max(i for i, v in enumerate(vals) if v is not None)
        core = vals[lo : hi + 1]
        if any(v is None for v in core):
            raise SarimaError("missing interior values are not supported")
        return cls(months[lo], np.array(core), m)

    @classmethod
    def read_csv(cls, path, m=12, column="value") -> "MonthlySeries":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            return cls.from_pairs(((r["month"], r[column]) for r in reader), m)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["month", "value"])
        for k, v in zip(self.months, self.values):
            w.writerow([str(k), repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True, order=True)
class SarimaSpec:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    m: int = 12
    with_constant: bool = False

    def __post_init__(self):
        if min(self.p, self.d, self.q, self.P, self.D, self.Q) < 0 or self.m < 1:
            raise SarimaError(f"invalid orders: {self}")
        if self.m == 1 and (self.P or self.D or self.Q):
            raise SarimaError("seasonal orders need m > 1")

    @property
    def n_coef(self) -> int:
        return self.p + self.q + self.P + self.Q + int(self.with_constant)

    @property
    def n_params(self) -> int:
        """Parameter count for information criteria (innovation variance included)."""
        return self.n_coef + 1

    def min_length(self) -> int:
        m = self.m
        return (
            self.d
            + self.D * m
            + max(self.p + self.P * m, self.q + self.Q * m)
            + 1
            + int(self.with_constant)
        )

    def __str__(self):
        s = f"ARIMA({self.p},{self.d},{self.q})"
        if self.m > 1:
            s += f"({self.P},{self.D},{self.Q})[{self.m}]"
        return s + (" with constant" if self.with_constant else "")

    def to_dict(self):
        return {k: getattr(self, k) for k in ("p", "d", "q", "P", "D", "Q", "m", "with_constant")}


def difference(values, d=0, D=0, m=12):
    """Apply ``(1 - B^m)^D`` then ``(1 - B)^d``; output has ``len - d - D*m`` values."""
    y = np.asarray(getattr(values, "values", values), dtype=float)
    if len(y) <= d + D * m:
        raise SarimaError(f"series of length {len(y)} too short for d={d}, D={D}, m={m}")
    for _ in range(D):
        y = y[m:] - y[:-m]
    for _ in range(d):
        y = y[1:] - y[:-1]
    return y


def difference_poly(d, D, m):
    """Coefficients of ``(1 - B)^d (1 - B^m)^D`` in increasing powers of B."""
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    seas = np.zeros(m + 1)
    seas[0], seas[m] = 1.0, -1.0
    for _ in range(D):
        poly = np.convolve(poly, seas)
    return poly


# -- parametrisation -------------------------------------------------------

def pacf_to_ar(r):
    """Map partial autocorrelations in (-1, 1) to a stationary AR coefficient vector."""
    r = np.asarray(r, dtype=float)
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        phi = np.concatenate((phi - rk * phi[::-1], [rk])) if k else np.array([rk])
    return phi


def ar_to_pacf(phi):
    """Inverse of :func:`pacf_to_ar`; raises if ``phi`` is not stationary."""
    phi = np.asarray(phi, dtype=float).copy()
    r = np.zeros(len(phi))
    for k in range(len(phi) - 1, -1, -1):
        rk = phi[k]
        if abs(rk) >= 1:
            raise SarimaError("coefficients outside the stationary region")
        r[k] = rk
        if k:
            phi = (phi[:k] + rk * phi[:k][::-1]) / (1 - rk * rk)
    return r


def _to_coef(u):
    return pacf_to_ar(np.tanh(u))


def _from_coef(c):
    return np.arctanh(np.clip(ar_to_pacf(c), -0.999999, 0.999999))


def expand_polys(phi, theta, Phi, Theta, m):
    """Full AR coefficients ``ar`` (poly = 1 - sum ar_i B^i) and MA ``ma`` (1 + sum)."""
    a = np.concatenate(([1.0], -np.asarray(phi, dtype=float)))
    sa = np.zeros(len(Phi) * m + 1)
    sa[0] = 1.0
    sa[m::m] = -np.asarray(Phi, dtype=float)
    ar = -np.convolve(a, sa)[1:]
    b = np.concatenate(([1.0], np.asarray(theta, dtype=float)))
    sb = np.zeros(len(Theta) * m + 1)
    sb[0] = 1.0
    sb[m::m] = np.asarray(Theta, dtype=float)
    ma = np.convolve(b, sb)[1:]
    return ar, ma


def _state_dim(ar, ma):
    return max(len(ar), len(ma) + 1, 1)


def _is_stationary(coefs, sign=-1.0):
    if len(coefs) == 0 or not np.any(coefs):
        return True
    poly = np.concatenate(([1.0], sign * np.asarray(coefs)))
    roots = np.roots(poly[::-1])
    return bool(np.all(np.abs(roots) > 1.0 + 1e-10))


def arma_loglik(wc, ar, ma):
    """Concentrated exact log-likelihood of a zero-mean ARMA sample.

    Returns ``(loglik, sigma2, innovations, F, a_last, P_last, P0)``.
    """
    r = _state_dim(ar, ma)
    P0 = kernels.arma_stationary_cov(ar, ma, r)
    v, F, a_last, P_last = kernels.arma_filter(wc, ar, ma, P0)
    n = len(wc)
    with np.errstate(over="ignore", invalid="ignore"):
        sigma2 = float(np.sum(v * v / F) / n)
    if not sigma2 > 0 or not np.isfinite(sigma2):
        return -np.inf, sigma2, v, F, a_last, P_last, P0
    ll = -0.5 * n * (math.log(2 * math.pi) + math.log(sigma2) + 1.0) - 0.5 * float(np.sum(np.log(F)))
    return ll, sigma2, v, F, a_last, P_last, P0


# -- fitted model ----------------------------------------------------------

@dataclass
class FittedSarima:
    spec: SarimaSpec
    phi: np.ndarray
    theta: np.ndarray
    Phi: np.ndarray
    Theta: np.ndarray
    mean: float
    sigma2: float
    loglik: float
    nobs: int
    residuals: np.ndarray
    converged: bool
    nfev: int
    loglik_init: float
    message: str = ""
    y: np.ndarray = field(default=None, repr=False)
    start: YearMonth | None = None
    _state: tuple = field(default=None, repr=False)

    @property
    def constant(self) -> float:
        return float(self.mean * (1 - np.sum(self.phi)) * (1 - np.sum(self.Phi)))

    @property
    def aicc(self) -> float:
        return aicc(self.loglik, self.spec.n_params, self.nobs)

    @property
    def aic(self) -> float:
        return -2.0 * self.loglik + 2.0 * self.spec.n_params

    def polys(self):
        return expand_polys(self.phi, self.theta, self.Phi, self.Theta, self.spec.m)

    def to_dict(self) -> dict:
        """Audit dump: spec, parameters, likelihood and criteria."""
        return {
            "spec": self.spec.to_dict(),
            "label": str(self.spec),
            "phi": [float(x) for x in self.phi],
            "theta": [float(x) for x in self.theta],
            "Phi": [float(x) for x in self.Phi],
            "Theta": [float(x) for x in self.Theta],
            "mean": float(self.mean),
            "constant": self.constant,
            "sigma2": float(self.sigma2),
            "loglik": float(self.loglik),
            "aicc": float(self.aicc),
            "nobs": int(self.nobs),
            "converged": bool(self.converged),
            "nfev": int(self.nfev),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def aicc(loglik, k, n):
    """Second-order corrected AIC; ``inf`` when ``n <= k + 1``."""
    if k < 1:
        raise SarimaError("parameter count must include the innovation variance")
    if n <= k + 1 or not np.isfinite(loglik):
        return math.inf
    aic = -2.0 * loglik + 2.0 * k
    return aic + 2.0 * k * (k + 1) / (n - k - 1)


class _Objective:
    def __init__(self, w, spec, mean0, scale):
        self.w = w
        self.spec = spec
        self.mean0 = mean0
        self.scale = scale
        self.nfev = 0

    def unpack(self, x):
        s = self.spec
        i = 0
        phi = _to_coef(x[i : i + s.p]); i += s.p
        theta = -_to_coef(x[i : i + s.q]); i += s.q
        Phi = _to_coef(x[i : i + s.P]); i += s.P
        Theta = -_to_coef(x[i : i + s.Q]); i += s.Q
        mean = self.mean0 + x[i] * self.scale if s.with_constant else 0.0
        return phi, theta, Phi, Theta, mean

    def loglik(self, x):
        phi, theta, Phi, Theta, mean = self.unpack(x)
        ar, ma = expand_polys(phi, theta, Phi, Theta, self.spec.m)
        return arma_loglik(self.w - mean, ar, ma)

    def __call__(self, x):
        self.nfev += 1
        if np.any(np.abs(x[: self.spec.n_coef - int(self.spec.with_constant)]) > 15):
            return 1e100
        ll = self.loglik(x)[0]
        return -ll if np.isfinite(ll) else 1e100


def fit(series, spec: SarimaSpec, *, max_eval=1000, rtol=1e-8) -> FittedSarima:
    """Exact maximum likelihood fit of ``spec`` to ``series``.

    A Nelder-Mead simplex run is polished by BFGS with numeric gradients.
    ``converged`` is False when neither stage reports success.
    """
    y = np.asarray(getattr(series, "values", series), dtype=float)
    start = getattr(series, "start", None)
    if getattr(series, "m", spec.m) != spec.m and isinstance(series, MonthlySeries):
        raise SarimaError("series and spec disagree on the seasonal period")
    if len(y) < spec.min_length():
        raise SarimaError(f"{len(y)} observations, {spec} needs at least {spec.min_length()}")
    w = difference(y, spec.d, spec.D, spec.m)
    n = len(w)
    scale = float(np.std(w)) or 1.0
    mean0 = float(np.mean(w)) if spec.with_constant else 0.0
    obj = _Objective(w, spec, mean0, scale)
    k = spec.n_coef
    x0 = np.zeros(k)
    f0 = obj(x0)
    if f0 >= 1e100:
        raise DegenerateSeriesError(f"degenerate innovation variance for {spec}")
    x, fx, converged, msg = x0, f0, True, "no free coefficients"
    if k:
        nm = optimize.minimize(
            obj, x0, method="Nelder-Mead",
            options={"maxfev": max(50, max_eval // 2), "xatol": 1e-6,
                     "fatol": rtol * max(1.0, abs(f0)), "adaptive": k > 3},
        )
        x, fx = nm.x, nm.fun
        remaining = max(0, max_eval - obj.nfev)
        converged, msg = bool(nm.success), "nelder-mead: " + str(nm.message)
        if remaining > 2 * k:
            bf = optimize.minimize(
                obj, x, method="BFGS",
                options={"gtol": 1e-5, "maxiter": max(1, remaining // (k + 2)), "eps": 1e-7},
            )
            if bf.fun <= fx:
                x, fx = bf.x, bf.fun
            grad = optimize.approx_fprime(x, obj, 1e-6) / max(n, 1)
            converged = bool(bf.success) or bool(np.max(np.abs(grad)) < 1e-4)
            msg = "bfgs: " + str(bf.message)
    phi, theta, Phi, Theta, mean = obj.unpack(x)
    ar, ma = expand_polys(phi, theta, Phi, Theta, spec.m)
    ll, sigma2, v, F, a_last, P_last, P0 = arma_loglik(w - mean, ar, ma)
    if not sigma2 > 1e-12 * max(1.0, scale * scale):
        raise DegenerateSeriesError(f"degenerate innovation variance for {spec}")
    var_mean = 0.0
    a_ones = np.zeros_like(a_last)
    if spec.with_constant:
        v1, F1, a_ones, _ = kernels.arma_filter(np.ones(n), ar, ma, P0)
        info = float(np.sum(v1 * v1 / F1))
        var_mean = sigma2 / info if info > 0 else math.inf
    return FittedSarima(
        spec=spec, phi=phi, theta=theta, Phi=Phi, Theta=Theta, mean=float(mean),
        sigma2=sigma2, loglik=float(ll), nobs=n, residuals=v / np.sqrt(F),
        converged=converged and np.isfinite(ll), nfev=obj.nfev, loglik_init=-f0,
        message=msg, y=y, start=start,
        _state=(a_last, P_last, a_ones, var_mean),
    )


# -- forecasting -----------------------------------------------------------

@dataclass
class Forecast:
    start: YearMonth | None
    mean: np.ndarray
    variance: np.ndarray
    cov: np.ndarray
    bounds: dict  # level -> (lower, upper)

    @property
    def horizon(self):
        return len(self.mean)


def z_value(level: float) -> float:
    return float(stats.norm.ppf(0.5 + level / 200.0))


def psi_integration(d, D, m, horizon):
    """Impulse response of ``1 / ((1-B)^d (1-B^m)^D)`` up to ``horizon`` terms."""
    delta = difference_poly(d, D, m)[1:]
    psi = np.zeros(horizon)
    psi[0] = 1.0
    for k in range(1, horizon):
        j = np.arange(1, min(k, len(delta)) + 1)
        psi[k] = -np.sum(delta[j - 1] * psi[k - j])
    return psi


def _transition(ar, ma):
    r = _state_dim(ar, ma)
    T = np.zeros((r, r))
    T[: len(ar), 0] = ar
    T[np.arange(r - 1), np.arange(1, r)] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    R[1 : len(ma) + 1] = ma[: r - 1]
    return T, np.outer(R, R)


def _forecast_path(spec, ar, ma, mean, sigma2, state, y, horizon, var_mean=0.0):
    """Point forecasts of ``y`` and their error covariance for one parameter set."""
    T, RR = _transition(ar, ma)
    a_last, P_last, a_ones = state
    a = a_last.copy()
    P = P_last.copy()
    g_state = a_ones.copy()
    w_hat = np.empty(horizon)
    gains = np.empty(horizon)
    Ps = []
    for h in range(horizon):
        a = T @ a
        g_state = T @ g_state
        P = T @ P @ T.T + RR
        w_hat[h] = mean + a[0]
        gains[h] = 1.0 - g_state[0]
        Ps.append(P)
    cov_w = np.empty((horizon, horizon))
    for i in range(horizon):
        G = Ps[i]
        for j in range(i, horizon):
            cov_w[i, j] = cov_w[j, i] = G[0, 0]
            G = T @ G
    cov_w *= sigma2
    if var_mean and np.isfinite(var_mean):
        cov_w += var_mean * np.outer(gains, gains)

    delta = difference_poly(spec.d, spec.D, spec.m)[1:]
    hist = list(y[-len(delta):]) if len(delta) else []
    y_hat = np.empty(horizon)
    for h in range(horizon):
        val = w_hat[h]
        for j, dj in enumerate(delta, start=1):
            val -= dj * hist[-j]
        y_hat[h] = val
        hist.append(val)
    psi = psi_integration(spec.d, spec.D, spec.m, horizon)
    L = np.zeros((horizon, horizon))
    for i in range(horizon):
        L[i, : i + 1] = psi[i::-1]
    return y_hat, L @ cov_w @ L.T


def forecast(fitted: FittedSarima, horizon: int, levels=(80, 95), *, mean_uncertainty=True) -> Forecast:
    """Point forecasts, forecast-error covariance and interval bounds.

    The covariance covers the ARMA state uncertainty at the forecast origin
    and, when a constant is fitted and ``mean_uncertainty`` is set, the
    sampling variance of the estimated mean propagated through the forecast
    function.
    """
    if horizon <= 0:
        raise SarimaError("horizon must be positive")
    spec = fitted.spec
    ar, ma = fitted.polys()
    a_last, P_last, a_ones, var_mean = fitted._state
    use_mean = spec.with_constant and mean_uncertainty
    y_hat, cov = _forecast_path(spec, ar, ma, fitted.mean, fitted.sigma2, (a_last, P_last, a_ones),
                                fitted.y, horizon, var_mean if use_mean else 0.0)
    var = np.diag(cov).copy()
    sd = np.sqrt(var)
    bounds = {lv: (y_hat - z_value(lv) * sd, y_hat + z_value(lv) * sd) for lv in levels}
    start = None
    if fitted.start is not None:
        start = fitted.start + len(fitted.y)
    return Forecast(start=start, mean=y_hat, variance=var, cov=cov, bounds=bounds)


# -- simulation ------------------------------------------------------------

def simulate(spec: SarimaSpec, *, phi=(), theta=(), Phi=(), Theta=(), mean=0.0,
             sigma2=1.0, n=100, seed=None, start="2000-01") -> MonthlySeries:
    """Draw a path of length ``n`` from ``spec`` (deterministic for a fixed seed).

    ``mean`` is the mean of the differenced process; differencing is
    integrated from zero initial values after the burn-in is discarded.
    """
    phi, theta = np.asarray(phi, float), np.asarray(theta, float)
    Phi, Theta = np.asarray(Phi, float), np.asarray(Theta, float)
    if (len(phi), len(theta), len(Phi), len(Theta)) != (spec.p, spec.q, spec.P, spec.Q):
        raise SarimaError("parameter lengths do not match the spec")
    for coefs, sign in ((phi, -1.0), (Phi, -1.0), (theta, 1.0), (Theta, 1.0)):
        if not _is_stationary(coefs, sign):
            raise SarimaError("explosive or non-invertible parameters")
    if sigma2 < 0:
        raise SarimaError("sigma2 must be non-negative")
    ar, ma = expand_polys(phi, theta, Phi, Theta, spec.m)
    burn = 10 * (spec.p + spec.q + (spec.P + spec.Q) * spec.m) + 100
    rng = np.random.default_rng(seed)
    eps = rng.normal(0.0, math.sqrt(sigma2), size=burn + n)
    w = signal.lfilter(np.concatenate(([1.0], ma)), np.concatenate(([1.0], -ar)), eps)[burn:] + mean
    y = w
    for _ in range(spec.D):
        y = signal.lfilter([1.0], np.r_[1.0, np.zeros(spec.m - 1), -1.0], y)
    for _ in range(spec.d):
        y = np.cumsum(y)
    return MonthlySeries(YearMonth.parse(start), y, spec.m)
