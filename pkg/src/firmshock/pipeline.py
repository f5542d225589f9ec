"""Stage-by-stage pipeline with a hash-keyed manifest.

Stages run in a fixed order and each writes into its own directory under
the output root.  A stage is skipped when both its input hash and the hash
of its existing outputs match the previous manifest entry.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import shutil
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import breaks as brk
from . import excess as exc
from . import ingest, officers, status
from .months import YearMonth, month_range, parse_window
from .sarima import MonthlySeries, SarimaError, SarimaSpec
from .selection import SearchBounds, SelectionError, stepwise_search

log = logging.getLogger(__name__)

STAGES = ("ingest", "diff", "resolve", "series", "fit", "excess", "breaks", "report")
EXIT_OK, EXIT_VALIDATION, EXIT_STAGE = 0, 2, 3
LONDON = "Greater London"


class ValidationError(ValueError):
    pass


class StageError(RuntimeError):
    pass


# -- configuration -------------------------------------------------------------

@dataclass
class PipelineConfig:
    snapshots: Path
    officers: Path
    output: Path
    gender_tables: Path | None = None
    postcode_map: Path | None = None
    historic: Path | None = None
    schema_map: Path | None = None
    date_format: str = "iso"
    register_start: str | None = None
    train: tuple = ("2011-01", "2020-01")
    eval: tuple = ("2020-03", "2021-06")
    pre_covid: tuple = ("2019-08", "2020-02")
    during_covid: tuple = ("2020-03", "2021-06")
    strata: tuple = ("sic", "region")
    fit_series: tuple = ("opened", "closed", "net_change")
    fuzzy: int = 1
    cutoff: str = "2020-02"
    bounds: SearchBounds = field(default_factory=SearchBounds)
    budget: int = 250
    levels: tuple = (80, 95)
    convention: str = exc.ACTUAL_MINUS_FORECAST
    chow_candidate: str = "2020-03"
    seed: int = 0
    jobs: int = 1

    _PATHS = ("snapshots", "officers", "output", "gender_tables", "postcode_map", "historic", "schema_map")
    _WINDOWS = ("train", "eval", "pre_covid", "during_covid")

    @classmethod
    def from_file(cls, path, overrides=None) -> "PipelineConfig":
        """Read ``key = value`` lines; relative paths resolve against the file's directory."""
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"config file {path} not found")
        raw = {}
        for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path.name}:{n}: expected 'key = value'")
            k, v = (x.strip() for x in line.split("=", 1))
            raw[k] = v
        raw.update(overrides or {})
        return cls.from_mapping(raw, base=path.parent)

    @classmethod
    def from_mapping(cls, raw, base=Path(".")) -> "PipelineConfig":
        kw = {}
        bkw = {}
        for k, v in raw.items():
            if v is None:
                continue
            if k in cls._PATHS:
                kw[k] = (Path(base) / v) if v != "" else None
            elif k in cls._WINDOWS:
                a, b = parse_window(v) if isinstance(v, str) else v
                kw[k] = (str(a), str(b))
            elif k in ("strata", "fit_series"):
                kw[k] = tuple(x.strip() for x in str(v).split(",") if x.strip() and x.strip() != "none") \
                    if isinstance(v, str) else tuple(v)
            elif k == "levels":
                kw[k] = tuple(int(x) for x in str(v).split(","))
            elif k in ("fuzzy", "budget", "seed", "jobs"):
                kw[k] = int(v)
            elif k in ("max_p", "max_q", "max_P", "max_Q", "max_d", "max_D", "max_order"):
                bkw[k] = int(v)
            elif k in ("date_format", "cutoff", "register_start", "convention", "chow_candidate"):
                kw[k] = str(v) or None
            else:
                raise ValidationError(f"unknown config key {k!r}")
        if bkw:
            kw["bounds"] = SearchBounds(**bkw)
        for req in ("snapshots", "officers", "output"):
            if req not in kw:
                raise ValidationError(f"config is missing {req!r}")
        return cls(**kw)

    def validate(self):
        for name in ("snapshots", "officers"):
            p = getattr(self, name)
            if p is None or not p.is_dir():
                raise ValidationError(f"{name} directory {p} does not exist")
        for name in ("gender_tables", "postcode_map", "historic", "schema_map"):
            p = getattr(self, name)
            if p is not None and not p.exists():
                raise ValidationError(f"{name} path {p} does not exist")
        try:
            files = ingest.list_monthly_files(self.snapshots, "companies")
        except ValueError as e:
            raise ValidationError(str(e)) from e
        if not files:
            raise ValidationError(f"no companies_YYYY-MM.csv snapshots in {self.snapshots}")
        w = {k: tuple(YearMonth.parse(x) for x in getattr(self, k)) for k in self._WINDOWS}
        for k, (a, b) in w.items():
            if a > b:
                raise ValidationError(f"{k} window runs backwards")
        if not w["train"][1] < w["eval"][0]:
            raise ValidationError("training window must end before the evaluation window")
        if not w["pre_covid"][1] < w["during_covid"][0]:
            raise ValidationError("pre-Covid window must precede the Covid window")
        if not YearMonth.parse(self.cutoff) < w["during_covid"][0]:
            raise ValidationError("cutoff must precede the Covid window")
        if self.convention not in exc.CONVENTIONS:
            raise ValidationError(f"convention must be one of {exc.CONVENTIONS}")
        for s in self.strata:
            if s not in ("sic", "region"):
                raise ValidationError(f"unknown stratum {s!r}")
        return self

    def params(self, *names):
        out = {}
        for n in names:
            v = getattr(self, n)
            out[n] = asdict(v) if isinstance(v, SearchBounds) else (list(v) if isinstance(v, tuple) else v)
        return out


# -- hashing and manifest --------------------------------------------------------

def _files_under(p: Path):
    if p is None or not p.exists():
        return []
    if p.is_file():
        return [p]
    return sorted(x for x in p.rglob("*") if x.is_file())


def hash_inputs(paths, params) -> str:
    """Digest of parameter JSON plus every input file's name and bytes."""
    h = hashlib.sha256(json.dumps(params, sort_keys=True, default=str).encode())
    for root in paths:
        root = Path(root) if root is not None else None
        for f in _files_under(root):
            rel = f.relative_to(root) if root.is_dir() else Path(f.name)
            h.update(str(rel).encode() + b"\0")
            h.update(hashlib.sha256(f.read_bytes()).digest())
    return h.hexdigest()


def hash_dir(d: Path) -> str:
    h = hashlib.sha256()
    for f in _files_under(d):
        h.update(str(f.relative_to(d)).encode() + b"\0")
        h.update(hashlib.sha256(f.read_bytes()).digest())
    return h.hexdigest()


def _read_manifest(path):
    if path.is_file():
        try:
            return {e["stage"]: e for e in json.loads(path.read_text())["stages"]}
        except (ValueError, KeyError):
            return {}
    return {}


def _write_manifest(path, entries, cfg):
    doc = {"seed": cfg.seed, "stages": entries}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- helpers ---------------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _fmt(x, nd=4):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return f"{x:.{nd}f}"


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# -- stages ----------------------------------------------------------------------

def stage_ingest(cfg, out: Path):
    schema = ingest.read_schema_map(cfg.schema_map) if cfg.schema_map else None
    comp = ingest.load_archive(cfg.snapshots, "companies", schema=schema, date_format=cfg.date_format)
    offs = ingest.load_archive(cfg.officers, "officers", schema=schema, date_format=cfg.date_format)
    companies = [r for m in comp.months for r in comp.records[m]]
    officer_recs = [r for m in offs.months for r in offs.records[m]]
    corp_flags = [r.registry_corporate or ingest.is_corporate_name(r.officer_raw_name) for r in officer_recs]
    ingest.write_companies(out / "companies.csv", companies)
    ingest.write_officers(out / "officers.csv", officer_recs, corp_flags)
    ingest.write_rejections(out / "rejections.jsonl", comp.rejections + offs.rejections)
    n_corp = sum(corp_flags)
    summary = {
        "snapshot_months": [str(m) for m in comp.months],
        "company_rows": len(companies),
        "officer_rows": len(officer_recs),
        "rejected_rows": len(comp.rejections) + len(offs.rejections),
        "corporate_officer_rows": n_corp,
        "corporate_share": round(n_corp / len(officer_recs), 6) if officer_recs else 0.0,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _firm_attributes(records, prefix_table):
    """Latest SIC section and registered region per company."""
    latest = {}
    for r in records:
        cur = latest.get(r.company_id)
        if cur is None or r.snapshot_month >= cur.snapshot_month:
            latest[r.company_id] = r
    out = {}
    for cid, r in latest.items():
        section = ingest.sic_section(r.sic_codes[0]) if r.sic_codes else None
        region = officers.map_region(r.postcode, prefix_table) if r.postcode else officers.EXCLUDED
        out[cid] = (section or "UNKNOWN", region)
    return out


def stage_diff(cfg, out: Path, normalized: Path):
    records = ingest.read_normalized_companies(normalized / "companies.csv")
    prefix = officers.load_prefix_table(cfg.postcode_map) if cfg.postcode_map else None
    tl = status.build_timelines(records, register_start=cfg.register_start)
    status.write_events(out / "events.csv", tl.events)
    attrs = _firm_attributes(records, prefix)
    rows = []
    for cid in sorted(tl.timelines):
        t = tl.timelines[cid]
        act = [m for m in tl.months if t.state_at(m).state == status.ACTIVE]
        sec, reg = attrs.get(cid, ("UNKNOWN", officers.EXCLUDED))
        rows.append([cid, sec, reg, str(t.first_month), str(act[0]) if act else "", str(act[-1]) if act else ""])
    _write_csv(out / "firms.csv", ["company_id", "section", "region", "first_seen",
                                   "first_active", "last_active"], rows)
    status.event_series(tl)["all"].to_csv(out / "series_all.csv")
    stratifiers = {"sic": {c: a[0] for c, a in attrs.items()}, "region": {c: a[1] for c, a in attrs.items()}}
    for name in cfg.strata:
        for key, es in status.event_series(tl, stratifiers[name]).items():
            es.to_csv(out / f"series_{name}_{_slug(key)}.csv")
    # active firm counts by (section, region) feed the London-share ratios
    counts = Counter()
    for cid, t in tl.timelines.items():
        sec, reg = attrs.get(cid, ("UNKNOWN", officers.EXCLUDED))
        for m in tl.months:
            if t.state_at(m).state == status.ACTIVE:
                counts[(str(m), sec, reg)] += 1
    _write_csv(out / "active_counts.csv", ["month", "section", "region", "active"],
               [[*k, v] for k, v in sorted(counts.items())])
    if tl.rejections:
        _write_csv(out / "rejections.csv", ["company_id", "month", "reason"],
                   [[c, str(m), r] for c, m, r in tl.rejections])


def _slug(s):
    return "".join(ch if ch.isalnum() else "_" for ch in str(s)).strip("_") or "UNKNOWN"


def stage_resolve(cfg, out: Path, normalized: Path):
    pairs = ingest.read_normalized_officers(normalized / "officers.csv")
    recs = [r for r, _ in pairs]
    persons_in, companies, share = ingest.filter_corporate_officers(
        [ingest.OfficerEventRecord(**{**r.__dict__, "registry_corporate": corp}) for r, corp in pairs]
    )
    providers = officers.load_gender_tables(cfg.gender_tables) if cfg.gender_tables else None
    prefix = officers.load_prefix_table(cfg.postcode_map) if cfg.postcode_map else None
    persons = officers.resolve_identities(persons_in, cfg.fuzzy, gender_providers=providers,
                                          prefix_table=prefix)
    officers.write_persons(out / "persons.csv", persons, cfg.cutoff)
    _write_csv(out / "appointments.csv",
               ["person_id", "company_id", "month", "appointment_date", "resignation_date"],
               [[p.person_id, a.company_id, str(a.month), a.appointment_date or "", a.resignation_date or ""]
                for p in persons for a in p.appointments])
    rows = officers.elite_table(persons, cfg.cutoff, cfg.during_covid)
    officers.write_elite_table(out / "elite_table.csv", rows)
    g = Counter(p.gender for p in persons)
    resolved = g[officers.WOMAN] + g[officers.MAN]
    summary = {
        "input_records": len(recs),
        "corporate_records": len(companies),
        "corporate_share": round(share, 6),
        "persons": len(persons),
        "fuzzy_merged_persons": sum(1 for p in persons if p.match_provenance() != "exact"),
        "ambiguous_persons": sum(1 for p in persons if "ambiguous" in p.flags),
        "no_dob_persons": sum(1 for p in persons if "no_dob" in p.flags),
        "gender_unresolved_share": round(g[officers.UNRESOLVED] / len(persons), 6) if persons else 0.0,
        "woman_share_of_resolved": round(g[officers.WOMAN] / resolved, 6) if resolved else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _read_event_series(path):
    rows = _read_csv(path)
    return {k: [r[k] for r in rows] for k in ("month", "opened", "closed", "reopened", "net_active")}


def stage_series(cfg, out: Path, diff_dir: Path):
    es = _read_event_series(diff_dir / "series_all.csv")
    months = [YearMonth.parse(m) for m in es["month"]]
    snap = {
        "opened": [float(x) for x in es["opened"]],
        "closed": [float(x) for x in es["closed"]],
        "net_change": [float(o) + float(r) - float(c) for o, r, c in zip(es["opened"], es["reopened"], es["closed"])],
    }
    for name, vals in snap.items():
        # month one of the snapshots carries no events, so it comes from history when available
        pairs = {}
        hist = cfg.historic / f"{name}.csv" if cfg.historic else None
        if hist is not None and hist.is_file():
            for r in _read_csv(hist):
                mo = YearMonth.parse(r["month"])
                if mo <= months[0]:
                    pairs[mo] = float(r["value"])
        for mo, v in zip(months[1:], vals[1:]):
            pairs[mo] = v
        series = MonthlySeries.from_pairs(sorted(pairs.items()), m=12)
        (out / f"{name}.csv").write_text(series.to_csv())


def _load_series(path):
    return MonthlySeries.read_csv(path, m=12)


def _fit_one(args):
    name, path, train, bounds, budget = args
    s = _load_series(path)
    t0, t1 = (YearMonth.parse(x) for x in train)
    if s.start > t0 or s.end < t1:
        return name, None, None, f"series {s.start}..{s.end} does not cover the training window"
    try:
        fitted, trace = stepwise_search(s.window(t0, t1), m=12, bounds=bounds, budget=budget)
    except (SelectionError, SarimaError) as e:
        return name, None, None, f"selection failed: {e}"
    return name, fitted.dumps(), trace.to_csv(), "ok"


def stage_fit(cfg, out: Path, series_dir: Path):
    jobs = [(n, series_dir / f"{n}.csv", cfg.train, cfg.bounds, cfg.budget)
            for n in cfg.fit_series if (series_dir / f"{n}.csv").is_file()]
    rows = []
    for name, model, trace, note in _map(_fit_one, jobs, cfg.jobs):
        if model is not None:
            (out / f"{name}.json").write_text(model)
            (out / f"{name}_trace.csv").write_text(trace)
        rows.append([name, note])
    _write_csv(out / "fit_status.csv", ["series", "status"], rows)


def _spec_from_dump(path):
    d = json.loads(Path(path).read_text())["spec"]
    return SarimaSpec(**d)


def stage_excess(cfg, out: Path, series_dir: Path, fit_dir: Path):
    rows = []
    for name in cfg.fit_series:
        model = fit_dir / f"{name}.json"
        spath = series_dir / f"{name}.csv"
        if not model.is_file() or not spath.is_file():
            rows.append([name, "skipped: no fitted model"])
            continue
        conf = exc.CounterfactualConfig(train=cfg.train, eval=cfg.eval, levels=cfg.levels,
                                        convention=cfg.convention, spec=_spec_from_dump(model))
        s = _load_series(spath)
        try:
            report = exc.run_counterfactual(s, conf, stratum=name)
        except SarimaError as e:
            rows.append([name, f"failed: {e}"])
            continue
        report.to_csv(out / f"{name}.csv")
        exc.write_quarterly(out / f"{name}_quarterly.csv", exc.quarterly_rollup(report), cfg.levels)
        rows.append([name, "ok"])
    _write_csv(out / "excess_status.csv", ["series", "status"], rows)


def stage_breaks(cfg, out: Path, series_dir: Path):
    series = {p.stem: _load_series(p) for p in sorted(series_dir.glob("*.csv"))}
    results = brk.run_battery(series, chow_candidate=cfg.chow_candidate, seasonal_train=cfg.train)
    brk.write_battery(out / "breaks.csv", results)


# -- report --------------------------------------------------------------------

def _window_months(w):
    a, b = (YearMonth.parse(x) for x in w)
    return a, b


def sector_table(firms, active_counts, events, appointments, persons, pre, during):
    """Per-section officer demographics (pre-Covid) and Covid/pre-Covid ratios."""
    pre_a, pre_b = pre
    dur_a, dur_b = during
    section = {f["company_id"]: f["section"] for f in firms}
    # officer demographics over firms active in the pre-Covid window
    active_pre = {f["company_id"] for f in firms if f["first_active"] and
                  YearMonth.parse(f["first_active"]) <= pre_b and YearMonth.parse(f["last_active"]) >= pre_a}
    pinfo = {p["person_id"]: p for p in persons}
    seen = set()
    demo = defaultdict(lambda: {"w": 0, "m": 0, "ages": []})
    for a in appointments:
        cid = a["company_id"]
        if cid not in active_pre or YearMonth.parse(a["month"]) > pre_b:
            continue
        if a["resignation_date"] and YearMonth.parse(a["resignation_date"][:7]) < pre_a:
            continue
        key = (a["person_id"], section[cid])
        if key in seen:
            continue
        seen.add(key)
        p = pinfo[a["person_id"]]
        d = demo[section[cid]]
        if p["gender"] == officers.WOMAN:
            d["w"] += 1
        elif p["gender"] == officers.MAN:
            d["m"] += 1
        if p["birth_month"]:
            try:
                d["ages"].append(officers.compute_age(p["birth_month"], pre_b))
            except officers.InvalidRecordError:
                pass
    # monthly levels per section
    act = defaultdict(lambda: defaultdict(float))
    lon = defaultdict(lambda: defaultdict(float))
    for r in active_counts:
        m = YearMonth.parse(r["month"])
        act[r["section"]][m] += int(r["active"])
        if r["region"] == LONDON:
            lon[r["section"]][m] += int(r["active"])
    flows = defaultdict(lambda: defaultdict(lambda: Counter()))
    for e in events:
        if e["event"] in (status.OPENED, status.CLOSED_EVENT):
            flows[section.get(e["company_id"], "UNKNOWN")][e["event"]][YearMonth.parse(e["month"])] += 1

    def mean_over(series, a, b):
        ms = [m for m in month_range(a, b)]
        vals = [series.get(m, 0.0) for m in ms]
        return sum(vals) / len(vals)

    def ratio(num, den):
        return num / den if den else None

    all_months = {YearMonth.parse(r["month"]) for r in active_counts}
    covered = all_months and min(all_months) <= pre_a and max(all_months) >= dur_b
    rows = []
    for sec in sorted(set(section.values())):
        d = demo.get(sec)
        note = []
        resolved = (d["w"] + d["m"]) if d else 0
        ages = np.array(d["ages"]) if d and d["ages"] else np.array([])
        pct_f = d["w"] / resolved if resolved else None
        if not resolved:
            note.append("no pre-Covid officers with resolved gender")
        mean_age = float(ages.mean()) if ages.size else None
        u35 = float(np.mean(ages < 35)) if ages.size else None
        o60 = float(np.mean(ages > 60)) if ages.size else None
        firms_r = open_r = close_r = london_r = None
        if covered:
            firms_r = ratio(mean_over(act[sec], dur_a, dur_b), mean_over(act[sec], pre_a, pre_b))
            open_r = ratio(mean_over(flows[sec][status.OPENED], dur_a, dur_b),
                           mean_over(flows[sec][status.OPENED], pre_a, pre_b))
            close_r = ratio(mean_over(flows[sec][status.CLOSED_EVENT], dur_a, dur_b),
                            mean_over(flows[sec][status.CLOSED_EVENT], pre_a, pre_b))
            share = {}
            for tag, (a, b) in (("pre", pre), ("dur", during)):
                tot = mean_over(act[sec], a, b)
                share[tag] = mean_over(lon[sec], a, b) / tot if tot else None
            london_r = ratio(share["dur"], share["pre"]) if share["pre"] else None
        else:
            note.append("snapshots do not span both windows")
        rows.append([sec, ingest.SECTION_NAMES.get(sec, sec), _fmt(pct_f, 2), _fmt(mean_age, 2),
                     _fmt(u35, 2), _fmt(o60, 2), _fmt(firms_r, 2), _fmt(open_r, 2),
                     _fmt(close_r, 2), _fmt(london_r, 2), "; ".join(note)])
    return rows


SECTOR_HEADER = ["section", "name", "pct_female", "mean_age", "pct_under_35", "pct_over_60",
                 "firms_ratio", "open_ratio", "close_ratio", "london_registered_share_ratio", "note"]


def stage_report(cfg, out: Path, root: Path):
    firms = _read_csv(root / "diff" / "firms.csv")
    active = _read_csv(root / "diff" / "active_counts.csv")
    events = _read_csv(root / "diff" / "events.csv")
    appts = _read_csv(root / "resolve" / "appointments.csv")
    persons = _read_csv(root / "resolve" / "persons.csv")
    pre = _window_months(cfg.pre_covid)
    during = _window_months(cfg.during_covid)
    _write_csv(out / "sector_table.csv", SECTOR_HEADER,
               sector_table(firms, active, events, appts, persons, pre, during))
    shutil.copyfile(root / "resolve" / "elite_table.csv", out / "elite_table.csv")

    # industry experience and first-time officers for firms opened in each window
    section = {f["company_id"]: f["section"] for f in firms}
    opened = {e["company_id"]: YearMonth.parse(e["month"]) for e in events if e["event"] == status.OPENED}
    by_person = defaultdict(dict)
    for a in appts:
        m = YearMonth.parse(a["month"])
        cur = by_person[a["person_id"]].get(a["company_id"])
        if cur is None or m < cur:
            by_person[a["person_id"]][a["company_id"]] = m
    obs, first_time = [], Counter()
    for pid, firsts in sorted(by_person.items()):
        for cid, m in sorted(firsts.items()):
            om = opened.get(cid)
            if om is None:
                continue
            prior = sum(1 for c, mm in firsts.items() if c != cid and mm < om)
            obs.append((section.get(cid, "UNKNOWN"), om, prior))
            if during[0] <= om <= during[1]:
                first_time["AlreadyOfficer" if prior else "FirstTime"] += 1
    cells = officers.industry_experience(obs, {"PreCovid": cfg.pre_covid, "DuringCovid": cfg.during_covid})
    _write_csv(out / "industry_experience.csv",
               ["section", "period", "n", "mean_winsorised", "lower_95", "upper_95", "mean_raw"],
               [[c.section, c.period, c.n, _fmt(c.mean), _fmt(c.lower), _fmt(c.upper), _fmt(c.raw_mean)]
                for c in cells.values()])

    # excess plot data: full actual history plus the counterfactual band
    exdir = root / "excess"
    for name in cfg.fit_series:
        rep = exdir / f"{name}.csv"
        spath = root / "series" / f"{name}.csv"
        if not rep.is_file() or not spath.is_file():
            continue
        with open(rep, encoding="utf-8") as fh:
            body = [ln for ln in fh if not ln.startswith("#")]
        ev = {r["month"]: r for r in csv.DictReader(body)}
        s = _load_series(spath)
        cols = ["forecast"] + [f"forecast_{b}_{lv}" for lv in cfg.levels for b in ("lower", "upper")]
        rows = []
        for m, v in zip(s.months, s.values):
            r = ev.get(str(m))
            rows.append([str(m), _fmt(float(v), 4)] + ([r[c] for c in cols] if r else [""] * len(cols)))
        _write_csv(out / f"excess_plot_{name}.csv", ["month", "actual"] + cols, rows)

    total_ft = sum(first_time.values())
    ing = json.loads((root / "ingest" / "summary.json").read_text())
    res = json.loads((root / "resolve" / "summary.json").read_text())
    summary = {
        "corporate_officer_share": ing["corporate_share"],
        "gender_unresolved_share": res["gender_unresolved_share"],
        "woman_share_of_resolved": res["woman_share_of_resolved"],
        "covid_new_firm_officerships": total_ft,
        "already_officer_share": round(first_time["AlreadyOfficer"] / total_ft, 6) if total_ft else None,
    }
    q = _quarter_change(root / "series" / "opened.csv", "2020-04", "2019-04")
    if q is not None:
        summary["opened_q2_2020_vs_q2_2019"] = round(q, 6)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _quarter_change(path, q_start, base_start):
    if not Path(path).is_file():
        return None
    s = _load_series(path)
    vals = dict(zip(s.months, s.values))
    a, b = YearMonth.parse(q_start), YearMonth.parse(base_start)
    try:
        cur = sum(vals[a + i] for i in range(3))
        base = sum(vals[b + i] for i in range(3))
    except KeyError:
        return None
    return cur / base - 1.0 if base else None


# -- orchestration ---------------------------------------------------------------

def _stage_plan(cfg: PipelineConfig, root: Path):
    d = {s: root / s for s in STAGES}
    return {
        "ingest": ([cfg.snapshots, cfg.officers, cfg.schema_map], cfg.params("date_format"),
                   lambda o: stage_ingest(cfg, o)),
        "diff": ([d["ingest"] / "companies.csv", cfg.postcode_map], cfg.params("strata", "register_start"),
                 lambda o: stage_diff(cfg, o, d["ingest"])),
        "resolve": ([d["ingest"] / "officers.csv", cfg.gender_tables, cfg.postcode_map],
                    cfg.params("fuzzy", "cutoff", "during_covid"),
                    lambda o: stage_resolve(cfg, o, d["ingest"])),
        "series": ([d["diff"] / "series_all.csv", cfg.historic], {},
                   lambda o: stage_series(cfg, o, d["diff"])),
        "fit": ([d["series"]], cfg.params("train", "bounds", "budget", "fit_series"),
                lambda o: stage_fit(cfg, o, d["series"])),
        "excess": ([d["series"], d["fit"]], cfg.params("train", "eval", "levels", "convention", "fit_series"),
                   lambda o: stage_excess(cfg, o, d["series"], d["fit"])),
        "breaks": ([d["series"]], cfg.params("chow_candidate", "train"),
                   lambda o: stage_breaks(cfg, o, d["series"])),
        "report": ([d["ingest"] / "summary.json", d["diff"], d["resolve"], d["series"], d["excess"]],
                   cfg.params("pre_covid", "during_covid", "cutoff", "levels", "fit_series"),
                   lambda o: stage_report(cfg, o, root)),
    }


@dataclass
class RunResult:
    exit_code: int
    manifest: list


def run_pipeline(cfg: PipelineConfig, *, force=False, stages=STAGES) -> RunResult:
    """Run (or reuse) every stage; stops at the first failure."""
    cfg.validate()
    root = Path(cfg.output)
    root.mkdir(parents=True, exist_ok=True)
    mpath = root / "manifest.json"
    previous = _read_manifest(mpath)
    plan = _stage_plan(cfg, root)
    entries = []
    failed = None
    for name in STAGES:
        if name not in stages:
            continue
        if failed:
            entries.append({"stage": name, "status": "not run", "input_hash": "", "output_hash": "",
                            "duration_s": 0.0, "error": f"upstream stage {failed} failed"})
            continue
        inputs, params, fn = plan[name]
        out = root / name
        t0 = time.perf_counter()
        ih = hash_inputs(inputs, {"stage": name, **params})
        prev = previous.get(name)
        if (not force and prev and prev.get("status") in ("ok", "cached") and prev.get("input_hash") == ih
                and out.is_dir() and prev.get("output_hash") == hash_dir(out)):
            entries.append({**prev, "status": "cached", "duration_s": round(time.perf_counter() - t0, 3)})
            log.info("stage %s: cached", name)
            continue
        if out.exists():
            shutil.rmtree(out)
        out.mkdir(parents=True)
        try:
            fn(out)
        except Exception as e:  # record and halt downstream
            log.error("stage %s failed: %s", name, e)
            entries.append({"stage": name, "status": "failed", "input_hash": ih, "output_hash": "",
                            "duration_s": round(time.perf_counter() - t0, 3),
                            "error": f"{e.__class__.__name__}: {e}"})
            failed = name
            continue
        entries.append({"stage": name, "status": "ok", "input_hash": ih, "output_hash": hash_dir(out),
                        "duration_s": round(time.perf_counter() - t0, 3)})
        log.info("stage %s: done in %.2fs", name, entries[-1]["duration_s"])
    _write_manifest(mpath, entries, cfg)
    return RunResult(EXIT_STAGE if failed else EXIT_OK, entries)
