import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from firmshock import status
from firmshock.ingest import CompanySnapshotRecord
from firmshock.months import YearMonth
from firmshock.status import (
    ABSENT,
    ACTIVE,
    CLOSED,
    CLOSED_EVENT,
    NOCHANGE,
    OPENED,
    REOPENED,
    FirmStatusClass,
    aggregate_events,
    build_timelines,
    classify_month,
    event_series,
)

STATES = (ABSENT, ACTIVE, CLOSED)


def rule_oracle(seq, t, register_start=False):
    """Apply each event rule independently to the whole sequence; at most one may fire."""
    cur, before = seq[t], seq[:t]
    prev = before[-1] if before else ABSENT
    never_seen = all(s == ABSENT for s in before)
    was_active = ACTIVE in before or (bool(before) and before[0] == CLOSED)
    rules = {
        # first snapshot month: nothing precedes it
        "pre_existing_open": t == 0 and cur == ACTIVE and register_start,
        "pre_existing_closed": t == 0 and cur == CLOSED,
        # the four lifecycle rules
        "opened": t > 0 and cur == ACTIVE and never_seen,
        "closed": t > 0 and cur == CLOSED and prev == ACTIVE,
        "reopened": t > 0 and cur == ACTIVE and prev != ACTIVE and was_active,
        "nochange": t > 0 and cur == ACTIVE and prev == ACTIVE,
        # documented additions
        "dropped_off_register": t > 0 and cur == ABSENT and prev == ACTIVE,
        "late_activation": t > 0 and cur == ACTIVE and prev != ACTIVE and not never_seen
        and not was_active,
    }
    fired = [k for k, v in rules.items() if v]
    assert len(fired) <= 1, (seq, t, fired)
    if not fired:
        return None
    return {
        "pre_existing_open": OPENED, "pre_existing_closed": CLOSED_EVENT, "opened": OPENED,
        "closed": CLOSED_EVENT, "reopened": REOPENED, "nochange": NOCHANGE,
        "dropped_off_register": CLOSED_EVENT, "late_activation": OPENED,
    }[fired[0]]


def run_sequence(seq, register_start=False):
    out, history, prev = [], [], None
    for t, s in enumerate(seq):
        ev, _ = classify_month(prev, s, history, first_month=(t == 0), register_start=register_start)
        out.append(ev)
        history.append(s)
        prev = s
    return out


@pytest.mark.parametrize("register_start", [False, True])
def test_exhaustive_sequences_match_oracle(register_start):
    for seq in itertools.product(STATES, repeat=4):
        got = run_sequence(seq, register_start)
        want = [rule_oracle(seq, t, register_start) for t in range(4)]
        assert got == want, seq


def test_conservation_exhaustive():
    for seq in itertools.product(STATES, repeat=4):
        evs = run_sequence(seq)
        for t in range(1, 4):
            delta = int(seq[t] == ACTIVE) - int(seq[t - 1] == ACTIVE)
            flow = int(evs[t] in (OPENED, REOPENED)) - int(evs[t] == CLOSED_EVENT)
            assert delta == flow, seq


@pytest.mark.parametrize("hist,curr,expected", [
    ([ABSENT], ACTIVE, OPENED),
    ([ACTIVE], CLOSED, CLOSED_EVENT),
    ([ACTIVE, CLOSED], ACTIVE, REOPENED),
    ([ACTIVE], ACTIVE, NOCHANGE),
    ([ACTIVE, CLOSED], CLOSED, None),
])
def test_rule_examples(hist, curr, expected):
    ev, _ = classify_month(hist[-1], curr, hist)
    assert ev == expected


def test_status_classes():
    assert FirmStatusClass.from_raw("In Administration").state == CLOSED
    assert FirmStatusClass.from_raw("  in   administration/receiver MANGER ").state == CLOSED
    assert FirmStatusClass.from_raw("Active").state == ACTIVE
    assert FirmStatusClass.from_raw("Liquidation").state == ACTIVE
    assert FirmStatusClass.from_raw(None).state == ABSENT
    assert FirmStatusClass.from_raw("Administration Order").closed_like_reason == "Administration Order"


def _r(cid, month, st="Active"):
    return CompanySnapshotRecord(cid, "X", st, YearMonth.parse(month))


def test_timeline_examples():
    recs = [_r("A", "2020-01"), _r("A", "2020-02"), _r("B", "2020-02"),
            _r("C", "2020-01", "In Administration"), _r("C", "2020-02", "In Administration")]
    tl = build_timelines(recs)
    ev = {c: [e.event for e in t.events] for c, t in tl.timelines.items()}
    assert ev == {"A": [NOCHANGE], "B": [OPENED], "C": [CLOSED_EVENT]}
    tl2 = build_timelines(recs, register_start="2020-01")
    assert [e.event for e in tl2.timelines["A"].events] == [OPENED, NOCHANGE]


def test_dropout_is_inferred_dissolution():
    tl = build_timelines([_r("A", "2020-01"), _r("A", "2020-02"), _r("B", "2020-03")])
    (e,) = tl.timelines["A"].events[1:]
    assert (e.event, e.flag, str(e.month)) == (CLOSED_EVENT, "inferred_dissolution", "2020-03")


def test_conflicting_duplicates_keep_first():
    tl = build_timelines([_r("A", "2020-01"), _r("A", "2020-01", "In Administration")])
    assert tl.timelines["A"].states[0].state == ACTIVE
    assert tl.rejections == [("A", YearMonth.parse("2020-01"), "conflicting duplicate status")]


def test_aggregate_partition_identity():
    m = YearMonth.parse("2020-05")
    events = [status.FirmEvent(c, m, OPENED) for c in ("a1", "a2", "b1")]
    strata = aggregate_events(events, [m], {"a1": "A", "a2": "A", "b1": "B"})
    assert strata["A"].opened == [2] and strata["B"].opened == [1]
    assert aggregate_events(events, [m])["all"].opened == [3]
    assert aggregate_events(events, [m], {})["UNKNOWN"].opened == [3]


firm_paths = st.lists(st.lists(st.sampled_from(STATES), min_size=6, max_size=6), min_size=1, max_size=25)


@given(firm_paths)
def test_net_active_matches_snapshot_counts(paths):
    months = [YearMonth.parse("2020-01") + i for i in range(6)]
    recs = []
    for k, path in enumerate(paths):
        for m, s in zip(months, path):
            if s != ABSENT:
                recs.append(_r(f"F{k}", str(m), "Active" if s == ACTIVE else "In Administration"))
    tl = build_timelines(recs, months)
    es = event_series(tl)["all"] if tl.timelines else None
    direct = [sum(p[i] == ACTIVE for p in paths) for i in range(6)]
    if es is not None:
        assert es.net_active == direct


@given(firm_paths, st.integers(1, 4))
def test_stratified_sums_equal_total(paths, k):
    months = [YearMonth.parse("2020-01") + i for i in range(6)]
    recs = [_r(f"F{j}", str(m), "Active" if s == ACTIVE else "In Administration")
            for j, p in enumerate(paths) for m, s in zip(months, p) if s != ABSENT]
    tl = build_timelines(recs, months)
    if not tl.timelines:
        return
    strat = {f"F{j}": f"S{j % k}" for j in range(len(paths))}
    by = event_series(tl, strat)
    total = event_series(tl)["all"]
    for col in ("opened", "closed", "reopened", "net_active"):
        summed = [sum(getattr(s, col)[i] for s in by.values()) for i in range(6)]
        assert summed == getattr(total, col)
