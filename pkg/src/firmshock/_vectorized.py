"""Pure-numpy twins of the kernels in ``_loops``."""
import numpy as np
from scipy.stats import rankdata

_P_STEADY = 1e-10


def _harvey(ar, ma, r):
    T = np.zeros((r, r))
    T[: len(ar), 0] = ar
    T[np.arange(r - 1), np.arange(1, r)] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    k = min(len(ma), r - 1)
    R[1 : k + 1] = ma[:k]
    return T, R


def arma_stationary_cov(ar, ma, r):
    T, R = _harvey(ar, ma, r)
    P = np.outer(R, R)
    A = T.copy()
    for _ in range(80):
        P = P + A @ P @ A.T
        A = A @ A
        if np.max(np.abs(A)) < 1e-15:
            break
    return P


def arma_filter(w, ar, ma, P0):
    r = P0.shape[0]
    n = len(w)
    T, R = _harvey(ar, ma, r)
    RR = np.outer(R, R)
    v = np.empty(n)
    F = np.empty(n)
    a = np.zeros(r)
    P = P0.copy()
    Pu = np.zeros((r, r))
    au = a
    steady = False
    for t in range(n):
        vt = w[t] - a[0]
        v[t] = vt
        if steady:
            F[t] = 1.0
            au = a + R * vt
        else:
            Ft = max(P[0, 0], 1e-300)
            F[t] = Ft
            col = P[:, 0].copy()
            au = a + col * (vt / Ft)
            Pu = P - np.outer(col, P[0, :]) / Ft
            if np.max(np.abs(Pu)) < _P_STEADY:
                steady = True
                Pu = np.zeros((r, r))
        a = T @ au
        if not steady:
            P = T @ Pu @ T.T + RR
    return v, F, au.copy(), Pu.copy()


def levenshtein_codes(a, b):
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    b = np.asarray(b)
    offs = np.arange(m + 1)
    row = offs.copy()
    for i in range(1, n + 1):
        x = np.empty(m + 1, dtype=np.int64)
        x[0] = i
        x[1:] = np.minimum(row[:-1] + (b != a[i - 1]), row[1:] + 1)
        # insertions: D[j] = min_k<=j x[k] + (j - k)
        row = np.minimum.accumulate(x - offs) + offs
    return int(row[m])


def segment_dp(y, max_breaks, h):
    y = np.asarray(y, dtype=float)
    n = len(y)
    s1 = np.concatenate(([0.0], np.cumsum(y)))
    s2 = np.concatenate(([0.0], np.cumsum(y * y)))
    i = np.arange(n + 1)[:, None]
    j = np.arange(n + 1)[None, :]
    length = j - i
    with np.errstate(divide="ignore", invalid="ignore"):
        d = s1[None, :] - s1[:, None]
        C = s2[None, :] - s2[:, None] - d * d / length
    C = np.where(length >= h, C, np.inf)
    K = max_breaks + 1
    V = np.full((K, n + 1), np.inf)
    arg = np.full((K, n + 1), -1, dtype=np.int64)
    V[0, h:] = C[0, h:]
    rows = np.arange(n + 1)
    for k in range(1, K):
        prev = np.where(rows >= k * h, V[k - 1], np.inf)
        tot = prev[:, None] + C
        best = np.argmin(tot, axis=0)
        val = tot[best, rows]
        ok = rows >= (k + 1) * h
        V[k] = np.where(ok, val, np.inf)
        arg[k] = np.where(ok & np.isfinite(val), best, -1)
    ssr = V[:, n].copy()
    bounds = np.full((K, max_breaks), -1, dtype=np.int64)
    for k in range(K):
        if not np.isfinite(ssr[k]):
            continue
        jj = n
        for kk in range(k, 0, -1):
            ii = arg[kk, jj]
            bounds[k, kk - 1] = ii
            jj = ii
    return ssr, bounds


def pettitt_u(x):
    x = np.asarray(x, dtype=float)
    n = len(x)
    ranks = rankdata(x)
    t = np.arange(1, n)
    return 2.0 * np.cumsum(ranks)[:-1] - t * (n + 1.0)


def za_tstats(y, model, lags, lo, hi):
    y = np.asarray(y, dtype=float)
    n = len(y)
    start = lags + 1
    dy = np.concatenate(([0.0], np.diff(y)))
    t = np.arange(start, n)
    Y = dy[start:]
    fixed = [np.ones(len(t)), t.astype(float)]
    tail = [y[t - 1]] + [dy[t - j] for j in range(1, lags + 1)]
    out = np.full(hi - lo, np.nan)
    for b in range(lo, hi):
        cols = list(fixed)
        if model in (0, 2):
            cols.append((t >= b).astype(float))
        if model in (1, 2):
            cols.append(np.where(t >= b, t - b + 1.0, 0.0))
        ycol = len(cols)
        X = np.column_stack(cols + tail)
        XtX = X.T @ X
        if abs(np.linalg.det(XtX)) < 1e-12:
            continue
        inv = np.linalg.inv(XtX)
        beta = inv @ (X.T @ Y)
        resid = Y - X @ beta
        s2 = resid @ resid / (len(Y) - X.shape[1])
        se = np.sqrt(s2 * inv[ycol, ycol])
        if se > 0:
            out[b - lo] = beta[ycol] / se
    return out
