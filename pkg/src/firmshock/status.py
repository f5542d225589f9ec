"""Monthly firm lifecycle events from consecutive registry snapshots.

Each firm is in one of three states per month: ``ACTIVE`` (on the register,
status not in the closed list), ``CLOSED`` (status in the closed list) or
``ABSENT`` (not on the register).  Events:

* ``Opened``   first appearance in an active state (or first activation of a
  firm that appeared already closed, flagged ``late_activation``);
* ``Closed``   active -> closed, or active -> absent (``inferred_dissolution``);
* ``Reopened`` active at some earlier month, not active at t-1, active at t;
* ``NoChange`` active at t-1 and t.

Firms present in the first snapshot month are pre-existing: active ones get
no event, closed ones get ``Closed``.  Persisting closure emits nothing.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

from .months import YearMonth, month_range

ACTIVE, CLOSED, ABSENT = "Active", "ClosedLike", "AbsentFromRegister"
OPENED, CLOSED_EVENT, REOPENED, NOCHANGE = "Opened", "Closed", "Reopened", "NoChange"
EVENTS = (OPENED, CLOSED_EVENT, REOPENED, NOCHANGE)

# Verbatim, including the registry's "Receiver Manger" spelling.
CLOSED_STATUSES = (
    "Active - Proposal to Strike Off",
    "Administration Order",
    "Administrative Receiver",
    "In Administration",
    "In Administration/Administrative Receiver",
    "In Administration/Receiver Manger",
    "Receiver Manager/Administrative Receiver",
    "Voluntary Arrangement/Receiver Manager",
)


def _norm_status(s: str) -> str:
    return " ".join(str(s).split()).casefold()


_CLOSED_KEYS = frozenset(_norm_status(s) for s in CLOSED_STATUSES)


@dataclass(frozen=True)
class FirmStatusClass:
    state: str
    closed_like_reason: str | None = None

    @classmethod
    def from_raw(cls, raw_status: str | None) -> "FirmStatusClass":
        if raw_status is None:
            return cls(ABSENT)
        if _norm_status(raw_status) in _CLOSED_KEYS:
            return cls(CLOSED, raw_status)
        return cls(ACTIVE)


ABSENT_CLASS = FirmStatusClass(ABSENT)


@dataclass(frozen=True)
class FirmEvent:
    company_id: str
    month: YearMonth
    event: str
    flag: str = ""


def classify_month(prev, curr, history, *, first_month=False, register_start=False):
    """Event for one firm at month t, or ``(None, flag)`` when nothing happens.

    ``prev``/``curr`` are :class:`FirmStatusClass` (or state strings) for t-1
    and t; ``history`` holds the states of all months before t (including
    t-1).  ``first_month`` marks the first snapshot month;
    ``register_start`` makes active firms there count as Opened.
    Returns ``(event_name_or_None, flag)``.
    """
    prev_s = getattr(prev, "state", prev) if prev is not None else ABSENT
    curr_s = getattr(curr, "state", curr) if curr is not None else ABSENT
    hist = [getattr(h, "state", h) for h in history]
    if first_month:
        if curr_s == ACTIVE:
            return (OPENED, "") if register_start else (None, "pre_existing")
        if curr_s == CLOSED:
            return CLOSED_EVENT, "pre_existing"
        return None, ""
    ever_present = any(h != ABSENT for h in hist)
    # a firm already closed in the first snapshot is taken to have traded before it
    ever_active = any(h == ACTIVE for h in hist) or (bool(hist) and hist[0] == CLOSED)
    if curr_s == ACTIVE:
        if prev_s == ACTIVE:
            return NOCHANGE, ""
        if not ever_present:
            return OPENED, ""
        if ever_active:
            return REOPENED, ""
        return OPENED, "late_activation"
    if curr_s == CLOSED:
        if prev_s == ACTIVE:
            return CLOSED_EVENT, ""
        if not ever_present:
            return None, "appeared_closed"
        return None, ""
    if prev_s == ACTIVE:
        return CLOSED_EVENT, "inferred_dissolution"
    return None, ""


@dataclass
class FirmTimeline:
    company_id: str
    first_month: YearMonth
    states: list = field(default_factory=list)  # FirmStatusClass per month from first_month
    events: list = field(default_factory=list)

    def state_at(self, month: YearMonth):
        i = month - self.first_month
        if 0 <= i < len(self.states):
            return self.states[i]
        return ABSENT_CLASS


@dataclass
class TimelineSet:
    months: list
    timelines: dict  # company_id -> FirmTimeline
    rejections: list = field(default_factory=list)  # (company_id, month, reason)

    @property
    def events(self):
        out = [e for tl in self.timelines.values() for e in tl.events]
        out.sort(key=lambda e: (e.month, e.company_id))
        return out


def build_timelines(records, months=None, *, register_start=None) -> TimelineSet:
    """Per-firm status timelines and their events.

    ``records`` is an iterable of snapshot records over contiguous months.
    Duplicate (company, month) rows with conflicting status keep the first
    and are logged.
    """
    by_firm = defaultdict(dict)
    seen_months = set()
    rejections = []
    for rec in records:
        month = rec.snapshot_month
        seen_months.add(month)
        cur = by_firm[rec.company_id]
        if month in cur:
            if cur[month] != rec.status:
                rejections.append((rec.company_id, month, "conflicting duplicate status"))
            continue
        cur[month] = rec.status
    if months is None:
        if not seen_months:
            return TimelineSet([], {}, rejections)
        months = month_range(min(seen_months), max(seen_months))
    months = list(months)
    for a, b in zip(months, months[1:]):
        if b - a != 1:
            raise ValueError(f"snapshot months not contiguous at {a}..{b}")
    first = months[0]
    opened_at_start = register_start is not None and YearMonth.parse(register_start) == first
    timelines = {}
    for cid in sorted(by_firm):
        obs = by_firm[cid]
        start = min(obs)
        tl = FirmTimeline(cid, start)
        history = [ABSENT_CLASS] * (start - first)
        prev = None
        for month in month_range(start, months[-1]):
            curr = FirmStatusClass.from_raw(obs.get(month))
            tl.states.append(curr)
            ev, flag = classify_month(prev, curr, history, first_month=(month == first),
                                      register_start=opened_at_start)
            if ev is not None:
                tl.events.append(FirmEvent(cid, month, ev, flag))
            history.append(curr)
            prev = curr
        timelines[cid] = tl
    return TimelineSet(months, timelines, rejections)


@dataclass
class EventSeries:
    stratum: str
    months: list
    opened: list
    closed: list
    reopened: list
    nochange: list
    net_active: list

    def column(self, name):
        return getattr(self, name)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["month", "opened", "closed", "reopened", "nochange", "net_active"])
            for row in zip(self.months, self.opened, self.closed, self.reopened,
                           self.nochange, self.net_active):
                w.writerow([str(row[0]), *row[1:]])


def active_counts(timelines: TimelineSet, stratifier=None):
    """Active-firm counts per stratum and month, straight from the states."""
    months = timelines.months
    out = defaultdict(lambda: [0] * len(months))
    for cid, tl in timelines.timelines.items():
        key = _stratum(stratifier, cid)
        for i, month in enumerate(months):
            if tl.state_at(month).state == ACTIVE:
                out[key][i] += 1
    return dict(out)


def _stratum(stratifier, cid):
    if stratifier is None:
        return "all"
    return stratifier.get(cid) or "UNKNOWN"


def aggregate_events(events, months, stratifier=None, baseline=None):
    """Monthly event counts per stratum.

    ``baseline`` maps stratum -> active firms in the first month and seeds
    ``net_active``; it defaults to zero.
    """
    months = list(months)
    pos = {m: i for i, m in enumerate(months)}
    counts = defaultdict(lambda: {e: [0] * len(months) for e in EVENTS})
    for ev in events:
        i = pos.get(ev.month)
        if i is None:
            continue
        counts[_stratum(stratifier, ev.company_id)][ev.event][i] += 1
    baseline = baseline or {}
    for key in baseline:
        counts[key]
    out = {}
    for key in sorted(counts):
        c = counts[key]
        net = []
        level = baseline.get(key, 0)
        for i in range(len(months)):
            if i > 0:
                level += c[OPENED][i] + c[REOPENED][i] - c[CLOSED_EVENT][i]
            net.append(level)
        out[key] = EventSeries(key, months, c[OPENED], c[CLOSED_EVENT], c[REOPENED],
                               c[NOCHANGE], net)
    return out


def event_series(timelines: TimelineSet, stratifier=None):
    """Stratified :class:`EventSeries` with ``net_active`` anchored on month one."""
    if not timelines.months:
        return {}
    # every stratum that holds a firm gets a series, even an all-zero one
    base = {_stratum(stratifier, cid): 0 for cid in timelines.timelines}
    base.update({k: v[0] for k, v in active_counts(timelines, stratifier).items()})
    return aggregate_events(timelines.events, timelines.months, stratifier, base)


def write_events(path, events):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["company_id", "month", "event", "flag"])
        for e in events:
            w.writerow([e.company_id, str(e.month), e.event, e.flag])
