"""Loop-form kernels compiled with numba.

Every function here has a numpy twin in ``_vectorized`` with the same
signature and the same tie-breaking; ``kernels`` picks one of the two.
"""
import numpy as np

from ._accel import njit

_P_STEADY = 1e-10


@njit
def arma_stationary_cov(ar, ma, r):
    """Unconditional state covariance of the ARMA state vector (unit variance).

    Solves P = T P T' + R R' by the doubling recursion.
    """
    T = np.zeros((r, r))
    for i in range(ar.shape[0]):
        T[i, 0] = ar[i]
    for i in range(r - 1):
        T[i, i + 1] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    for i in range(min(ma.shape[0], r - 1)):
        R[i + 1] = ma[i]
    P = np.outer(R, R)
    A = T.copy()
    for _ in range(80):
        P = P + np.dot(np.dot(A, P), A.T)
        A = np.dot(A, A)
        if np.max(np.abs(A)) < 1e-15:
            break
    return P


@njit
def arma_filter(w, ar, ma, P0):
    """Kalman filter for a zero-mean ARMA in Harvey's state-space form.

    Returns innovations, their (unit-variance scaled) variances and the
    filtered state mean/covariance after the last observation.
    """
    r = P0.shape[0]
    n = w.shape[0]
    p = ar.shape[0]
    phi = np.zeros(r)
    for i in range(p):
        phi[i] = ar[i]
    R = np.zeros(r)
    R[0] = 1.0
    for i in range(min(ma.shape[0], r - 1)):
        R[i + 1] = ma[i]

    v = np.empty(n)
    F = np.empty(n)
    a = np.zeros(r)
    P = P0.copy()
    au = np.zeros(r)
    Pu = np.zeros((r, r))
    M = np.zeros((r, r))
    steady = False
    for t in range(n):
        if steady:
            vt = w[t] - a[0]
            v[t] = vt
            F[t] = 1.0
            for i in range(r):
                au[i] = a[i] + R[i] * vt
        else:
            vt = w[t] - a[0]
            Ft = P[0, 0]
            if Ft < 1e-300:
                Ft = 1e-300
            v[t] = vt
            F[t] = Ft
            big = 0.0
            for i in range(r):
                au[i] = a[i] + P[i, 0] * vt / Ft
            for i in range(r):
                for j in range(r):
                    x = P[i, j] - P[i, 0] * P[0, j] / Ft
                    Pu[i, j] = x
                    if abs(x) > big:
                        big = abs(x)
            if big < _P_STEADY:
                steady = True
                for i in range(r):
                    for j in range(r):
                        Pu[i, j] = 0.0
        # predict: a = T au, P = T Pu T' + R R'
        for i in range(r - 1):
            a[i] = phi[i] * au[0] + au[i + 1]
        a[r - 1] = phi[r - 1] * au[0]
        if not steady:
            for i in range(r):
                for j in range(r):
                    nxt = Pu[i + 1, j] if i + 1 < r else 0.0
                    M[i, j] = phi[i] * Pu[0, j] + nxt
            for i in range(r):
                for j in range(r):
                    nxt = M[i, j + 1] if j + 1 < r else 0.0
                    P[i, j] = M[i, 0] * phi[j] + nxt + R[i] * R[j]
    return v, F, au.copy(), Pu.copy()


@njit
def levenshtein_codes(a, b):
    """Unit-cost edit distance between two integer code arrays."""
    n = a.shape[0]
    m = b.shape[0]
    if n == 0:
        return m
    if m == 0:
        return n
    prev = np.arange(m + 1)
    cur = np.empty(m + 1, dtype=prev.dtype)
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            best = prev[j - 1] + cost
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        for j in range(m + 1):
            prev[j] = cur[j]
    return prev[m]


@njit
def segment_dp(y, max_breaks, h):
    """Optimal mean-shift segmentations with 0..max_breaks breaks.

    Returns ``(ssr, bounds)`` where ``ssr[k]`` is the minimal residual sum of
    squares with ``k`` breaks and ``bounds[k, :k]`` holds the start index of
    each new segment (``-1`` padding, ``inf`` ssr when infeasible).
    """
    n = y.shape[0]
    s1 = np.zeros(n + 1)
    s2 = np.zeros(n + 1)
    for i in range(n):
        s1[i + 1] = s1[i] + y[i]
        s2[i + 1] = s2[i] + y[i] * y[i]
    K = max_breaks + 1
    V = np.full((K, n + 1), np.inf)
    arg = np.full((K, n + 1), -1, dtype=np.int64)
    for j in range(h, n + 1):
        d = s1[j]
        V[0, j] = s2[j] - d * d / j
    for k in range(1, K):
        for j in range((k + 1) * h, n + 1):
            best = np.inf
            bi = -1
            for i in range(k * h, j - h + 1):
                if V[k - 1, i] == np.inf:
                    continue
                d = s1[j] - s1[i]
                c = s2[j] - s2[i] - d * d / (j - i)
                val = V[k - 1, i] + c
                if val < best:
                    best = val
                    bi = i
            V[k, j] = best
            arg[k, j] = bi
    ssr = np.empty(K)
    bounds = np.full((K, max_breaks), -1, dtype=np.int64)
    for k in range(K):
        ssr[k] = V[k, n]
        if V[k, n] == np.inf:
            continue
        j = n
        for kk in range(k, 0, -1):
            i = arg[kk, j]
            bounds[k, kk - 1] = i
            j = i
    return ssr, bounds


@njit
def pettitt_u(x):
    """Pettitt's U_t for t = 1..n-1 (split after the t-th observation)."""
    n = x.shape[0]
    U = np.zeros(n - 1)
    acc = 0.0
    for t in range(n - 1):
        vt = 0.0
        for j in range(n):
            d = x[t] - x[j]
            if d > 0:
                vt += 1.0
            elif d < 0:
                vt -= 1.0
        acc += vt
        U[t] = acc
    return U


@njit
def za_tstats(y, model, lags, lo, hi):
    """Unit-root t statistics for every candidate break in ``[lo, hi)``.

    ``model``: 0 intercept shift, 1 trend shift, 2 both.  The break index is
    the first observation of the new regime.
    """
    n = y.shape[0]
    start = lags + 1
    nobs = n - start
    k = 3 + (1 if model == 2 else 0) + 1 + lags
    out = np.full(hi - lo, np.nan)
    X = np.empty((nobs, k))
    dy = np.empty(n)
    dy[0] = 0.0
    for t in range(1, n):
        dy[t] = y[t] - y[t - 1]
    Y = dy[start:].copy()
    for b in range(lo, hi):
        for row in range(nobs):
            t = start + row
            c = 0
            X[row, c] = 1.0
            c += 1
            X[row, c] = float(t)
            c += 1
            if model == 0 or model == 2:
                X[row, c] = 1.0 if t >= b else 0.0
                c += 1
            if model == 1 or model == 2:
                X[row, c] = float(t - b + 1) if t >= b else 0.0
                c += 1
            X[row, c] = y[t - 1]
            ycol = c
            c += 1
            for j in range(1, lags + 1):
                X[row, c] = dy[t - j]
                c += 1
        XtX = np.dot(X.T, X)
        if abs(np.linalg.det(XtX)) < 1e-12:
            continue
        inv = np.linalg.inv(XtX)
        beta = np.dot(inv, np.dot(X.T, Y))
        resid = Y - np.dot(X, beta)
        s2 = np.dot(resid, resid) / (nobs - k)
        se = np.sqrt(s2 * inv[ycol, ycol])
        if se > 0:
            out[b - lo] = beta[ycol] / se
    return out
