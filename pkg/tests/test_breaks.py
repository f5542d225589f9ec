import itertools

import numpy as np
import pytest

from firmshock import breaks
from firmshock.breaks import (
    BreakTestError,
    bai_perron,
    chow_test,
    cusum_test,
    pettitt_test,
    run_battery,
    segmentation,
    seasonally_adjust,
    write_battery,
    zivot_andrews,
)
from firmshock.months import YearMonth
from firmshock.sarima import MonthlySeries


def brute_segmentation(y, k, h):
    """Exhaustive minimum-SSR mean-shift segmentation with k breaks (segments >= h)."""
    n = len(y)
    best = (np.inf, ())
    for cuts in itertools.combinations(range(h, n - h + 1), k):
        edges = (0,) + cuts + (n,)
        if any(b - a < h for a, b in zip(edges, edges[1:])):
            continue
        ssr = sum(float(np.sum((y[a:b] - y[a:b].mean()) ** 2)) for a, b in zip(edges, edges[1:]))
        if ssr < best[0]:
            best = (ssr, cuts)
    return best


def brute_pettitt(x):
    n = len(x)
    return np.array([sum(np.sign(x[i] - x[j]) for i in range(t + 1) for j in range(t + 1, n))
                     for t in range(n - 1)])


def test_dp_equals_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = int(rng.integers(20, 61))
        y = rng.normal(size=n) + np.repeat(rng.normal(0, 3, 3), [n // 3, n // 3, n - 2 * (n // 3)])
        h = max(3, int(n * 0.15))
        seg = segmentation(y, 2, h)
        for k in (1, 2):
            ssr, cuts = brute_segmentation(y, k, h)
            assert seg.ssr[k] == pytest.approx(ssr, rel=1e-9)
            assert seg.bounds[k] == cuts


def test_bai_perron_examples():
    rng = np.random.default_rng(1)
    y = np.r_[np.zeros(20), np.full(20, 8.0), np.zeros(20)] + rng.normal(size=60)
    r = bai_perron(y, max_breaks=2)
    assert r.break_index == (20, 40)
    assert bai_perron(np.full(60, 2.0)).break_dates == ()
    one = np.r_[np.zeros(30), np.full(30, 6.0)] + rng.normal(size=60)
    assert bai_perron(one, max_breaks=2).break_index == (30,)


def test_bai_perron_clipping_and_errors():
    r = bai_perron(np.random.default_rng(2).normal(size=20), max_breaks=9, min_segment=0.15)
    assert "clipped" in r.note
    with pytest.raises(BreakTestError):
        bai_perron(np.arange(10.0))


def test_pettitt_matches_brute_force():
    rng = np.random.default_rng(3)
    for n in (10, 37, 120):
        x = rng.integers(0, 6, n).astype(float)  # ties on purpose
        assert np.array_equal(breaks.kernels.pettitt_u(x), brute_pettitt(x))


def test_pettitt_examples():
    rng = np.random.default_rng(4)
    x = np.r_[rng.normal(size=50), rng.normal(5, 1, 50)]
    r = pettitt_test(x)
    assert r.rejected and abs(r.break_index[0] - 50) <= 2
    c = pettitt_test(np.full(40, 1.0))
    assert c.p_value == pytest.approx(1.0) and not c.rejected
    ramp = pettitt_test(np.arange(100.0))
    assert ramp.rejected and abs(ramp.break_index[0] - 50) <= 1


def test_cusum_examples():
    assert cusum_test(np.full(30, 5.0)).statistic == 0.0
    rng = np.random.default_rng(5)
    hits = 0
    for _ in range(50):
        y = rng.normal(size=100) + np.r_[np.zeros(50), np.full(50, 10.0)]
        r = cusum_test(y)
        hits += r.rejected and abs(r.break_index[0] - 50) <= 5
    assert hits >= 47
    with pytest.raises(BreakTestError):
        cusum_test(np.arange(5.0))


def test_chow_examples():
    s = MonthlySeries("2019-01", np.r_[np.zeros(14), np.full(10, 5.0)] + np.random.default_rng(6).normal(size=24))
    r = chow_test(s, "2020-03")
    assert r.rejected and str(r.break_dates[0]) == "2020-03"
    with pytest.raises(BreakTestError):
        chow_test(s, "2019-02")
    with pytest.raises(BreakTestError):
        chow_test(np.arange(12.0), 11, model="trend")


@pytest.mark.slow
def test_null_false_alarm_rates():
    rng = np.random.default_rng(7)
    cus = np.mean([cusum_test(rng.normal(size=100)).rejected for _ in range(1000)])
    chow = np.mean([chow_test(rng.normal(size=100), 50).rejected for _ in range(1000)])
    assert 0.03 <= cus <= 0.07
    assert 0.03 <= chow <= 0.07


@pytest.mark.slow
def test_zivot_andrews_power_and_size():
    rng = np.random.default_rng(8)
    broken = []
    rw = []
    for _ in range(100):
        e = rng.normal(size=200)
        y = np.zeros(200)
        for t in range(1, 200):
            y[t] = 0.5 * y[t - 1] + e[t]
        broken.append(zivot_andrews(y + np.r_[np.zeros(100), np.full(100, 4.0)]).rejected)
        rw.append(zivot_andrews(np.cumsum(rng.normal(size=200))).rejected)
    assert np.mean(broken) > 0.8
    assert np.mean(rw) <= 0.09


def test_zivot_andrews_trimming_and_errors():
    y = np.cumsum(np.random.default_rng(9).normal(size=100))
    for model in ("intercept", "trend", "both"):
        r = zivot_andrews(y, model=model)
        cand = int(r.note.split("candidate ")[1])
        assert 15 <= cand <= 85
    with pytest.raises(BreakTestError):
        zivot_andrews(np.arange(20.0))


def test_break_dates_are_shift_equivariant():
    rng = np.random.default_rng(10)
    y = MonthlySeries("2015-01", np.r_[rng.normal(size=60), rng.normal(4, 1, 60)])
    shifted = MonthlySeries("2015-01", y.values + 1234.5)
    for test in breaks.TESTS:
        a = breaks._run_one(test, y, "2020-01", 2, "intercept")
        b = breaks._run_one(test, shifted, "2020-01", 2, "intercept")
        assert a.break_dates == b.break_dates, test


def test_battery_records_errors_and_continues(tmp_path):
    s = MonthlySeries("2019-01", np.random.default_rng(11).normal(size=25))
    rows = run_battery({"opened": s}, chow_candidate="2020-01", adjust=False)
    assert [r.test for r in rows] == list(breaks.TESTS)
    assert [r.decision for r in rows].count("error") == 1
    assert rows[-1].decision == "error" and rows[-1].test == "zivot_andrews"
    write_battery(tmp_path / "b.csv", rows)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "series,test,statistic,break_date,p_or_decision,note"
    assert len(lines) == 6


def test_battery_raw_and_adjusted():
    s = MonthlySeries("2015-01", np.random.default_rng(12).normal(size=72) + np.tile(np.arange(12.0), 6))
    rows = run_battery({"x": s})
    assert {r.series for r in rows} == {"x", "x_sa"}
    sa = seasonally_adjust(s, ("2015-01", "2019-12"))
    assert abs(np.mean(sa.values[:60])) < 1e-9
