import os
import subprocess
import sys

import numpy as np
import pytest

from firmshock import kernels
from firmshock.kernels import loops, vectorized


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_stationary_cov_agrees(rng):
    ar, ma = np.array([0.5, -0.2]), np.array([0.3])
    r = 2
    assert np.allclose(loops.arma_stationary_cov(ar, ma, r), vectorized.arma_stationary_cov(ar, ma, r))


def test_filter_agrees(rng):
    ar, ma = np.array([0.4]), np.array([0.2, 0.1])
    P0 = vectorized.arma_stationary_cov(ar, ma, 3)
    w = rng.normal(size=80)
    for u, v in zip(loops.arma_filter(w, ar, ma, P0), vectorized.arma_filter(w, ar, ma, P0)):
        assert np.allclose(u, v)


def test_levenshtein_agrees(rng):
    for _ in range(100):
        a, b = rng.integers(0, 4, rng.integers(0, 10)), rng.integers(0, 4, rng.integers(0, 10))
        assert loops.levenshtein_codes(a, b) == vectorized.levenshtein_codes(a, b)


def test_segment_dp_agrees(rng):
    y = rng.normal(size=90)
    (s1, b1), (s2, b2) = loops.segment_dp(y, 3, 10), vectorized.segment_dp(y, 3, 10)
    assert np.allclose(s1, s2) and np.array_equal(b1, b2)


def test_pettitt_and_za_agree(rng):
    x = np.cumsum(rng.normal(size=120))
    assert np.array_equal(loops.pettitt_u(x), vectorized.pettitt_u(x))
    for model in (0, 1, 2):
        assert np.allclose(loops.za_tstats(x, model, 2, 20, 100),
                           vectorized.za_tstats(x, model, 2, 20, 100), equal_nan=True)


def test_backend_name():
    assert kernels.backend_name() in ("numba", "numpy")


def test_numpy_backend_selected_by_env():
    env = {**os.environ, "FIRMSHOCK_NO_NUMBA": "1"}
    code = ("from firmshock import kernels, officers; "
            "print(kernels.backend_name(), officers.levenshtein('KITTEN', 'SITTING'))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "3"]
