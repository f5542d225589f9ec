"""Hot numeric kernels, dispatched to numba or numpy.

The numba path is used unless ``FIRMSHOCK_NO_NUMBA=1`` is set before import.
Both implementations stay importable as ``kernels.loops`` and
``kernels.vectorized`` so they can be compared directly.
"""
import numpy as np

from . import _loops as loops
from . import _vectorized as vectorized
from ._accel import USE_NUMBA, backend_name

_impl = loops if USE_NUMBA else vectorized

__all__ = [
    "arma_stationary_cov",
    "arma_filter",
    "levenshtein_codes",
    "segment_dp",
    "pettitt_u",
    "za_tstats",
    "backend_name",
    "loops",
    "vectorized",
]


def arma_stationary_cov(ar, ma, r):
    return _impl.arma_stationary_cov(
        np.ascontiguousarray(ar, dtype=np.float64),
        np.ascontiguousarray(ma, dtype=np.float64),
        int(r),
    )


def arma_filter(w, ar, ma, P0):
    return _impl.arma_filter(
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(ar, dtype=np.float64),
        np.ascontiguousarray(ma, dtype=np.float64),
        np.ascontiguousarray(P0, dtype=np.float64),
    )


def levenshtein_codes(a, b):
    return int(
        _impl.levenshtein_codes(
            np.ascontiguousarray(a, dtype=np.int64),
            np.ascontiguousarray(b, dtype=np.int64),
        )
    )


def segment_dp(y, max_breaks, h):
    return _impl.segment_dp(np.ascontiguousarray(y, dtype=np.float64), int(max_breaks), int(h))


def pettitt_u(x):
    return _impl.pettitt_u(np.ascontiguousarray(x, dtype=np.float64))


def za_tstats(y, model, lags, lo, hi):
    return _impl.za_tstats(
        np.ascontiguousarray(y, dtype=np.float64), int(model), int(lags), int(lo), int(hi)
    )
