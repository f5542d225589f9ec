"""Deterministic synthetic registry fixture.

Writes monthly company snapshots, officer appointment files, historic
monthly event counts, gender tables, a postcode map and a pipeline config.
Everything is drawn from one seeded generator, so equal arguments give
byte-identical files.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .months import YearMonth, month_range
from .status import CLOSED_STATUSES

FEMALE = ["MARY", "SARAH", "EMMA", "OLIVIA", "SOPHIE", "LAURA", "HANNAH", "CHARLOTTE", "JANE",
          "AMY", "RACHEL", "LUCY", "ELIZABETH", "KATHERINE", "ZARA", "PRIYA", "AISHA", "GRACE"]
MALE = ["JOHN", "DAVID", "JAMES", "MICHAEL", "ROBERT", "PAUL", "MARK", "ANDREW", "PETER",
        "RICHARD", "THOMAS", "DANIEL", "MOHAMMED", "RAJ", "GEORGE", "OLIVER", "HARRY", "IAN"]
UNISEX = ["ALEX", "SAM", "JORDAN", "CHRIS"]
SURNAMES = ["SMITH", "JONES", "TAYLOR", "BROWN", "WILLIAMS", "WILSON", "JOHNSON", "DAVIES",
            "PATEL", "WRIGHT", "KHAN", "EVANS", "THOMAS", "ROBERTS", "WALKER", "GREEN",
            "HUGHES", "EDWARDS", "HALL", "WOOD", "CLARKE", "OBRIEN", "MORGAN", "SCOTT",
            "YOUNG", "ALLEN", "KING", "BAKER", "HARRIS", "CLARK", "LEWIS", "MARTIN",
            "JACKSON", "WHITE", "THOMPSON", "ANDERSON", "MURPHY", "CAMPBELL", "STEWART", "MOORE"]
# (sic code, weight)
SIC_CODES = [("01110", 2), ("10710", 4), ("41100", 10), ("43210", 8), ("47910", 12),
             ("49410", 5), ("56101", 8), ("62012", 10), ("64209", 6), ("68209", 9),
             ("70229", 10), ("82990", 7), ("86900", 4), ("90030", 3), ("96090", 2)]
# (postcode area, weight); London areas dominate like the real register
AREAS = [("EC", 6), ("WC", 3), ("E", 6), ("N", 5), ("SW", 6), ("W", 5), ("M", 6), ("B", 6),
         ("LS", 5), ("BS", 4), ("CF", 3), ("EH", 3), ("G", 3), ("BT", 2), ("NE", 3),
         ("NG", 3), ("CB", 2), ("GU", 4), ("RG", 3), ("JE", 1)]
CORPORATE_OFFICERS = ["ALPHA SECRETARIAL SERVICES LIMITED", "NORTHERN HOLDINGS LTD",
                      "BRIDGE INTERNATIONAL INVESTMENTS", "CITY CORPORATE DIRECTORS LTD"]


@dataclass(frozen=True)
class FixtureSpec:
    start: str = "2018-07"
    months: int = 36
    firms: int = 5000
    officers: int = 8000
    history_start: str = "2011-01"
    seed: int = 20200301
    covid_open_boost: float = 1.3
    covid_close_cut: float = 0.8


def _season(month: YearMonth, amp):
    return 1.0 + amp * math.cos(2 * math.pi * (month.month - 1) / 12.0)


def _in_covid(month):
    return YearMonth.parse("2020-03") <= month <= YearMonth.parse("2021-06")


def historic_counts(spec: FixtureSpec, rng, opened_base, closed_base):
    """Monthly opened/closed counts from ``history_start`` to the fixture end."""
    first = YearMonth.parse(spec.history_start)
    last = YearMonth.parse(spec.start) + (spec.months - 1)
    months = month_range(first, last)
    opened, closed = [], []
    level_o, level_c = opened_base, closed_base
    for mo in months:
        boost_o = spec.covid_open_boost if _in_covid(mo) else 1.0
        boost_c = spec.covid_close_cut if _in_covid(mo) else 1.0
        opened.append(int(rng.poisson(level_o * _season(mo, 0.25) * boost_o)))
        closed.append(int(rng.poisson(level_c * _season(mo, -0.15) * boost_c)))
    return months, np.array(opened), np.array(closed)


def _weighted(rng, items, size):
    vals = [v for v, _ in items]
    w = np.array([w for _, w in items], dtype=float)
    idx = rng.choice(len(vals), size=size, p=w / w.sum())
    return [vals[i] for i in idx]


def _postcode(rng, area):
    d = int(rng.integers(1, 20))
    letters = "ABDEFGHJLNPQRSTUWXYZ"
    return f"{area}{d} {int(rng.integers(1, 10))}{letters[rng.integers(20)]}{letters[rng.integers(20)]}"


def _random_date(rng, month: YearMonth):
    day = int(rng.integers(1, 29))
    return dt.date(month.year, month.month, day)


def _typo(rng, name):
    if len(name) < 4:
        return name
    i = int(rng.integers(1, len(name)))
    return name[:i] + name[i + 1:]  # one deletion, distance 1


def generate(out_dir, spec: FixtureSpec = FixtureSpec()):
    """Write the fixture under ``out_dir``; returns the config path."""
    out = Path(out_dir)
    rng = np.random.default_rng(spec.seed)
    snap_dir, off_dir, hist_dir, gender_dir = (out / d for d in ("snapshots", "officers", "historic", "gender"))
    for d in (snap_dir, off_dir, hist_dir, gender_dir):
        d.mkdir(parents=True, exist_ok=True)
    months = month_range(YearMonth.parse(spec.start), YearMonth.parse(spec.start) + (spec.months - 1))

    # Opening volume sized so the register holds spec.firms distinct companies.
    opened_base = spec.firms * 0.3 / spec.months
    closed_base = opened_base * 0.75
    hist_months, h_open, h_close = historic_counts(spec, rng, opened_base, closed_base)
    pos = {m: i for i, m in enumerate(hist_months)}
    n_new = int(sum(h_open[pos[m]] for m in months[1:]))
    n_initial = spec.firms - n_new
    if n_initial <= 0:
        raise ValueError("fixture too small for its opening volume")

    # -- firms and their monthly status ------------------------------------
    ids = [f"{i + 1:08d}" for i in range(spec.firms)]
    sic = _weighted(rng, SIC_CODES, spec.firms)
    areas = _weighted(rng, AREAS, spec.firms)
    postcodes = [_postcode(rng, a) for a in areas]
    opened_at = {}
    status = {}  # company -> list of status or None per month
    T = len(months)
    for i in range(n_initial):
        cid = ids[i]
        st = [None] * T
        st[0] = "Active" if rng.random() > 0.02 else CLOSED_STATUSES[rng.integers(len(CLOSED_STATUSES))]
        status[cid] = st
        y = int(rng.integers(2006, 2018))
        opened_at[cid] = YearMonth.of(y, int(rng.integers(1, 13)))
    nxt = n_initial
    active = {ids[i] for i in range(n_initial) if status[ids[i]][0] == "Active"}
    closed_like = {ids[i]: 0 for i in range(n_initial) if status[ids[i]][0] != "Active"}
    for t in range(1, T):
        mo = months[t]
        # carry forward
        for cid in active:
            status[cid][t] = "Active"
        for cid in list(closed_like):
            closed_like[cid] += 1
            if closed_like[cid] > 3 and rng.random() < 0.5:
                del closed_like[cid]  # dissolved; drops off the register
            else:
                status[cid][t] = status[cid][t - 1]
        # closures
        k = min(int(h_close[pos[mo]]), len(active))
        victims = rng.choice(sorted(active), size=k, replace=False) if k else []
        for cid in victims:
            active.discard(cid)
            if rng.random() < 0.6:
                status[cid][t] = CLOSED_STATUSES[rng.integers(len(CLOSED_STATUSES))]
                closed_like[cid] = 0
            else:
                status[cid][t] = None
        # a few reopenings from earlier closures
        pool = sorted(c for c, age in closed_like.items() if age >= 1)
        for cid in (rng.choice(pool, size=min(2, len(pool)), replace=False) if pool else []):
            if rng.random() < 0.5:
                del closed_like[cid]
                active.add(cid)
                status[cid][t] = "Active"
        # openings
        for _ in range(int(h_open[pos[mo]])):
            cid = ids[nxt]
            nxt += 1
            st = [None] * T
            st[t] = "Active"
            status[cid] = st
            active.add(cid)
            opened_at[cid] = mo

    inc_dates = {cid: _random_date(rng, opened_at[cid]).isoformat() for cid in ids[:nxt]}
    for t, mo in enumerate(months):
        path = snap_dir / f"companies_{mo}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["CompanyName", "CompanyNumber", "RegAddress.PostCode", "CompanyStatus",
                        "DissolutionDate", "IncorporationDate", "SICCode.SicText_1",
                        "SICCode.SicText_2", "SICCode.SicText_3", "SICCode.SicText_4"])
            for j, cid in enumerate(ids[:nxt]):
                s = status[cid][t]
                if s is None:
                    continue
                w.writerow([f"SYNTHETIC FIRM {cid} LTD", cid, postcodes[j], s, "", inc_dates[cid],
                            f"{sic[j]} - synthetic activity", "", "", ""])
            # malformed rows that the parser must reject without side effects
            w.writerow(["BROKEN ROW", "", "", "Active", "", "", "", "", "", ""])
            w.writerow(["BAD DATE LTD", f"9{t:07d}", "", "Active", "", "2020-02-31", "", "", "", ""])

    # -- officers ------------------------------------------------------------
    n_people = spec.officers
    sex = rng.random(n_people) < 0.32
    forenames = [
        (FEMALE[rng.integers(len(FEMALE))] if f else MALE[rng.integers(len(MALE))])
        if rng.random() > 0.04 else UNISEX[rng.integers(len(UNISEX))]
        for f in sex
    ]
    middles = [MALE[rng.integers(len(MALE))] if rng.random() < 0.3 else "" for _ in range(n_people)]
    surnames = [SURNAMES[rng.integers(len(SURNAMES))] for _ in range(n_people)]
    births = [YearMonth.of(int(rng.integers(1945, 2001)), int(rng.integers(1, 13))) for _ in range(n_people)]
    no_dob = rng.random(n_people) < 0.02
    # firms per person: mostly one, a long tail of serial officers
    k = np.minimum(1 + rng.geometric(0.55, n_people) - 1, 14)
    k[rng.choice(n_people, size=max(1, n_people // 400), replace=False)] = 12
    slots = np.repeat(np.arange(n_people), k)
    rng.shuffle(slots)
    n_firms = nxt
    firm_slots = list(range(n_firms)) + list(rng.integers(0, n_firms, size=max(0, len(slots) - n_firms)))
    firm_slots = firm_slots[: len(slots)]
    apps = {}
    for person, firm in zip(slots, firm_slots):
        apps.setdefault((int(person), int(firm)), None)
    first_month = months[0]
    rows_by_month = {m: [] for m in months}
    for (person, firm) in sorted(apps):
        cid = ids[firm]
        om = opened_at[cid]
        # officers may join an existing firm later than its opening
        if om < first_month and rng.random() < 0.3:
            om = om + int(rng.integers(0, max(1, first_month - om + T)))
        app_month = om
        if app_month < births[person] + 18 * 12:
            app_month = births[person] + 18 * 12
        file_month = max(app_month, first_month)
        if file_month > months[-1]:
            continue
        name_first = forenames[person]
        if rng.random() < 0.03:
            name_first = _typo(rng, name_first)
        full = " ".join(x for x in (name_first, middles[person]) if x)
        title = "Mr " if (not sex[person] and rng.random() < 0.1) else ("Mrs " if sex[person] and rng.random() < 0.1 else "")
        raw = f"{surnames[person]}, {title}{full.title()}"
        dob = "" if no_dob[person] else str(births[person])
        resign = ""
        if rng.random() < 0.1:
            resign = _random_date(rng, app_month + int(rng.integers(1, 24))).isoformat()
        pc = postcodes[firm] if rng.random() < 0.7 else _postcode(rng, _weighted(rng, AREAS, 1)[0])
        rows_by_month[file_month].append([cid, raw, dob, _random_date(rng, app_month).isoformat(),
                                          resign, pc, ""])
    # corporate officers, some flagged by the registry and some only by name
    for j in range(n_firms // 30):
        cid = ids[int(rng.integers(n_firms))]
        om = max(opened_at[cid], first_month)
        flag = "Y" if j % 2 == 0 else ""
        rows_by_month[om].append([cid, CORPORATE_OFFICERS[j % len(CORPORATE_OFFICERS)], "",
                                  _random_date(rng, om).isoformat(), "", "", flag])
    for mo in months:
        with open(off_dir / f"officers_{mo}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["CompanyNumber", "Name", "DateOfBirth", "AppointmentDate",
                        "ResignationDate", "PostCode", "CorporateIndicator"])
            for row in rows_by_month[mo]:
                w.writerow(row)

    # -- historic counts, providers, postcode map, config --------------------
    hist_end = months[0]
    for name, vals in (("opened", h_open), ("closed", h_close), ("net_change", h_open - h_close)):
        with open(hist_dir / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["month", "value"])
            for mo, v in zip(hist_months, vals):
                if mo <= hist_end:
                    w.writerow([str(mo), int(v)])
    _write_gender_tables(gender_dir)
    pmap = out / "postcode_areas.csv"
    pmap.write_text(resources.files("firmshock").joinpath("data/postcode_areas.csv").read_text())
    cfg = out / "pipeline.conf"
    cfg.write_text(
        "# synthetic fixture pipeline configuration\n"
        "snapshots = snapshots\n"
        "officers = officers\n"
        "historic = historic\n"
        "gender_tables = gender\n"
        "postcode_map = postcode_areas.csv\n"
        "output = out\n"
        "train = 2011-01:2020-01\n"
        "eval = 2020-03:2021-06\n"
        "pre_covid = 2019-08:2020-02\n"
        "during_covid = 2020-03:2021-06\n"
        "strata = sic,region\n"
        "fit_series = opened,closed,net_change\n"
        "fuzzy = 1\n"
        "cutoff = 2020-02\n"
        "max_p = 2\nmax_q = 2\nmax_P = 1\nmax_Q = 1\n"
        "budget = 30\n"
        f"seed = {spec.seed}\n"
    )
    return cfg


def _write_gender_tables(directory):
    d = Path(directory)
    specs = {
        "provider_a.csv": (0.97, 0.0, 0.0),
        "provider_b.csv": (0.9, 0.2, 0.0),
        "provider_c.csv": (0.8, 0.0, 0.1),
    }
    for fname, (conf, unknown_share, flip_share) in specs.items():
        rows = []
        for i, name in enumerate(sorted(FEMALE + MALE)):
            label = "Woman" if name in FEMALE else "Man"
            h = (i * 7919 + len(fname)) % 100 / 100.0
            if h < unknown_share:
                label = "Unknown"
            elif h < unknown_share + flip_share:
                label = "Man" if label == "Woman" else "Woman"
            rows.append((name, label, conf))
        for i, name in enumerate(UNISEX):
            label = ("Woman", "Man", "Unknown")[(i + len(fname)) % 3]
            rows.append((name, label, 0.5))
        with open(d / fname, "w", encoding="utf-8") as fh:
            fh.write("# locale: GB\n")
            for name, label, c in rows:
                fh.write(f"{name},{label},{c}\n")
