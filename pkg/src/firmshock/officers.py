"""Officer identity resolution, demographics and prior-firm ledgers."""
from __future__ import annotations

import csv
import datetime as dt
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .ingest import normalize_name
from .months import YearMonth

WOMAN, MAN, UNRESOLVED, UNKNOWN = "Woman", "Man", "Unresolved", "Unknown"
EXCLUDED = "Excluded"
PRE_COVID = ("2019-08", "2020-02")
DURING_COVID = ("2020-03", "2021-06")
BUCKETS = tuple(str(i) for i in range(1, 10)) + ("10+",)


class InvalidRecordError(ValueError):
    pass


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute edit distance."""
    return kernels.levenshtein_codes([ord(c) for c in a], [ord(c) for c in b])


def compute_age(birth_month, observation) -> int:
    """Whole years elapsed, taking everyone to be born on the first of the month."""
    birth, obs = YearMonth.parse(birth_month), YearMonth.parse(observation)
    if birth > obs:
        raise InvalidRecordError(f"born {birth} after observation month {obs}")
    return (obs - birth) // 12


# -- gender ----------------------------------------------------------------

_LABELS = {
    "WOMAN": WOMAN, "FEMALE": WOMAN, "F": WOMAN,
    "MAN": MAN, "MALE": MAN, "M": MAN,
    "UNKNOWN": UNKNOWN, "ANDY": UNKNOWN, "U": UNKNOWN, "": UNKNOWN,
}


@dataclass
class GenderProviderTable:
    """Offline forename -> (label, confidence) lookup."""

    table: dict
    locale: str = "GB"
    name: str = "table"
    min_confidence: float = 0.0

    def lookup(self, forename: str):
        label, conf = self.table.get(forename.upper(), (UNKNOWN, 0.0))
        if conf < self.min_confidence:
            return UNKNOWN, conf
        return label, conf

    @classmethod
    def read(cls, path, min_confidence=0.0) -> "GenderProviderTable":
        """Lines of ``NAME,LABEL,CONFIDENCE``; ``# locale: XX`` may appear in a comment."""
        path = Path(path)
        table, locale = {}, "GB"
        with open(path, encoding="utf-8") as fh:
            for ln in fh:
                ln = ln.strip()
                if not ln:
                    continue
                if ln.startswith("#"):
                    m = re.match(r"#\s*locale\s*:\s*(\S+)", ln, re.I)
                    if m:
                        locale = m.group(1)
                    continue
                name, label, conf = (x.strip() for x in ln.split(","))
                lab = _LABELS.get(label.upper())
                if lab is None:
                    raise ValueError(f"{path.name}: unknown label {label!r}")
                c = float(conf)
                if not 0.0 <= c <= 1.0:
                    raise ValueError(f"{path.name}: confidence {c} outside [0, 1]")
                table[name.upper()] = (lab, c)
        return cls(table, locale, path.stem, min_confidence)


class RemoteGenderProvider:
    """HTTP name-to-gender lookup behind the table interface; off unless enabled."""

    def __init__(self, url="https://api.genderize.io", country="GB", enabled=False, timeout=10):
        self.url, self.country, self.enabled, self.timeout = url, country, enabled, timeout
        self.name = "remote"

    def lookup(self, forename: str):
        if not self.enabled:
            raise RuntimeError("remote gender provider is disabled")
        import json
        import urllib.parse
        import urllib.request

        q = urllib.parse.urlencode({"name": forename, "country_id": self.country})
        with urllib.request.urlopen(f"{self.url}?{q}", timeout=self.timeout) as resp:
            doc = json.load(resp)
        label = _LABELS.get(str(doc.get("gender") or "").upper(), UNKNOWN)
        return label, float(doc.get("probability") or 0.0)


def load_gender_tables(directory, min_confidence=0.0):
    return [GenderProviderTable.read(p, min_confidence)
            for p in sorted(Path(directory).glob("*.csv"))]


def infer_gender(forename: str, providers) -> str:
    """Majority vote of the providers; ties or no opinion give ``Unresolved``."""
    if not providers:
        raise ValueError("at least one gender provider is required")
    votes = Counter()
    for prov in providers:
        label, _ = prov.lookup(forename)
        if label in (WOMAN, MAN):
            votes[label] += 1
    if not votes or votes[WOMAN] == votes[MAN]:
        return UNRESOLVED
    return WOMAN if votes[WOMAN] > votes[MAN] else MAN


# -- region ----------------------------------------------------------------

_UK_POSTCODE = re.compile(r"^([A-Z]{1,2})[0-9][A-Z0-9]?(?:[0-9][A-Z]{2})?$")


@lru_cache(maxsize=1)
def default_prefix_table() -> dict:
    text = resources.files("firmshock").joinpath("data/postcode_areas.csv").read_text()
    return read_prefix_table(text.splitlines())


def read_prefix_table(lines) -> dict:
    rows = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    return {r["area"].strip().upper(): r["region"].strip() for r in csv.DictReader(rows)}


def load_prefix_table(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return read_prefix_table(fh.read().splitlines())


def map_region(postcode, prefix_table=None) -> str:
    """Region for a UK postcode by longest matching area prefix, else ``Excluded``."""
    table = default_prefix_table() if prefix_table is None else prefix_table
    pc = re.sub(r"\s+", "", str(postcode or "")).upper()
    m = _UK_POSTCODE.match(pc)
    if not m:
        return EXCLUDED
    for k in range(len(m.group(1)), 0, -1):
        region = table.get(pc[:k])
        if region:
            return region
    return EXCLUDED


# -- identity resolution -----------------------------------------------------

@dataclass(frozen=True)
class PersonKey:
    first_forename: str
    surname: str
    birth_month: YearMonth | None


@dataclass(frozen=True, order=True)
class Appointment:
    company_id: str
    month: YearMonth  # appointment month, or first month seen when undated
    appointment_date: dt.date | None = None
    resignation_date: dt.date | None = None


@dataclass
class ResolvedPerson:
    person_id: str
    key: PersonKey
    name_variants: frozenset
    appointments: tuple
    provenance: dict  # forename -> "exact" | "fuzzy(d)"
    flags: frozenset = frozenset()
    gender: str = UNRESOLVED
    region: str = EXCLUDED
    postcode: str | None = None

    @property
    def companies(self):
        return {a.company_id for a in self.appointments}

    def first_appointment(self):
        """Earliest appointment month per company."""
        first = {}
        for a in self.appointments:
            if a.company_id not in first or a.month < first[a.company_id]:
                first[a.company_id] = a.month
        return first

    def prior_firm_count(self, as_of, exclude=None) -> int:
        """Distinct companies first joined strictly before ``as_of``."""
        as_of = YearMonth.parse(as_of)
        return sum(1 for cid, m in self.first_appointment().items() if m < as_of and cid != exclude)

    def match_provenance(self):
        dists = [int(v[6:-1]) for v in self.provenance.values() if v.startswith("fuzzy")]
        return f"fuzzy({max(dists)})" if dists else "exact"


def _components(names, threshold):
    """Single-linkage groups of ``names`` under edit distance <= threshold."""
    parent = {n: n for n in names}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    if threshold > 0:
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                if abs(len(a) - len(b)) <= threshold and levenshtein(a, b) <= threshold:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
    groups = defaultdict(list)
    for n in names:
        groups[find(n)].append(n)
    return list(groups.values())


def _appointments(records):
    best = {}
    for r in records:
        month = YearMonth.from_date(r.appointment_date) if r.appointment_date else r.record_month
        key = (r.company_id, r.appointment_date)
        cur = best.get(key)
        if cur is None:
            best[key] = Appointment(r.company_id, month, r.appointment_date, r.resignation_date)
        else:
            res = max((d for d in (cur.resignation_date, r.resignation_date) if d), default=None)
            best[key] = Appointment(r.company_id, min(cur.month, month), r.appointment_date, res)
    return tuple(sorted(best.values(), key=lambda a: (a.month, a.company_id, str(a.appointment_date))))


def _latest_postcode(records):
    dated = [(r.record_month, r.correspondence_postcode or "") for r in records if r.correspondence_postcode]
    return max(dated)[1] if dated else None


def resolve_identities(records, fuzzy_threshold=1, *, gender_providers=None, prefix_table=None):
    """Group person officer records into :class:`ResolvedPerson` objects.

    Records sharing (first forename, surname, birth month) merge; inside a
    (surname, birth month) block, forenames within ``fuzzy_threshold`` edits
    of each other are linked transitively.  Groups whose forenames are not
    all within the threshold of each other are flagged ``ambiguous``.
    Records without a birth month or forename never merge fuzzily: each
    (name, company, appointment date) becomes its own flagged person.
    """
    blocks = defaultdict(lambda: defaultdict(list))
    loose = defaultdict(list)
    for r in records:
        nm = normalize_name(r.officer_raw_name)
        if r.birth_month is None or not nm.first_forename or not nm.surname:
            loose[(nm.surname, nm.forenames, r.company_id, str(r.appointment_date))].append((nm, r))
        else:
            blocks[(nm.surname, r.birth_month)][nm.first_forename].append((nm, r))

    people = []
    for (surname, birth), by_first in blocks.items():
        names = sorted(by_first)
        for group in _components(names, fuzzy_threshold):
            counts = {n: len({(r.company_id, r.appointment_date) for _, r in by_first[n]}) for n in group}
            rep = min(group, key=lambda n: (-counts[n], n))
            prov, flags = {}, set()
            for n in group:
                dist = levenshtein(n, rep)
                prov[n] = "exact" if dist == 0 else f"fuzzy({dist})"
            if any(levenshtein(a, b) > fuzzy_threshold
                   for i, a in enumerate(group) for b in group[i + 1 :]):
                flags.add("ambiguous")
            recs = [r for n in group for _, r in by_first[n]]
            variants = frozenset(str(nm) for n in group for nm, _ in by_first[n])
            people.append((PersonKey(rep, surname, birth), variants, recs, prov, frozenset(flags)))
    for (surname, forenames, _cid, _app), items in loose.items():
        nm = items[0][0]
        recs = [r for _, r in items]
        first = nm.first_forename
        people.append((PersonKey(first, surname, None), frozenset({str(nm)}), recs,
                       {first: "exact"}, frozenset({"no_dob"})))

    def sort_key(item):
        key, _variants, recs, _p, _f = item
        apps = _appointments(recs)
        return (key.surname, str(key.birth_month), key.first_forename,
                [(a.company_id, str(a.appointment_date)) for a in apps])

    people.sort(key=sort_key)
    out = []
    for i, (key, variants, recs, prov, flags) in enumerate(people):
        pc = _latest_postcode(recs)
        person = ResolvedPerson(
            person_id=f"P{i + 1:07d}",
            key=key,
            name_variants=variants,
            appointments=_appointments(recs),
            provenance=prov,
            flags=flags,
            postcode=pc,
            region=map_region(pc, prefix_table) if pc else EXCLUDED,
        )
        if gender_providers:
            person.gender = infer_gender(key.first_forename, gender_providers)
        out.append(person)
    return out


def partition_signature(persons):
    """Order-free description of a resolution: a set of frozen record-groups."""
    return frozenset(
        frozenset((a.company_id, a.appointment_date, p.key.surname, p.key.birth_month)
                  for a in p.appointments)
        for p in persons
    )


def classify_first_time(person: ResolvedPerson, event_month, company_id=None) -> str:
    """``FirstTime`` when no other company was joined before ``event_month``."""
    return "FirstTime" if person.prior_firm_count(event_month, exclude=company_id) == 0 else "AlreadyOfficer"


def is_elite(person: ResolvedPerson, as_of, threshold=2) -> bool:
    """Officer of at least ``threshold`` distinct firms joined before ``as_of``."""
    return person.prior_firm_count(as_of) >= threshold


# -- elite table -------------------------------------------------------------

@dataclass(frozen=True)
class EliteTableRow:
    bucket: str
    pre_pandemic_total: int
    created_during: int

    @property
    def creation_ratio(self) -> float:
        return self.created_during / self.pre_pandemic_total if self.pre_pandemic_total else 0.0

    @property
    def creation_percent(self) -> float:
        return round(100.0 * self.creation_ratio, 1)


def bucket_of(count: int) -> str | None:
    if count < 1:
        return None
    return "10+" if count >= 10 else str(count)


def creation_rows(counts) -> list:
    """Rows from ``{bucket: (total, created)}`` in bucket order."""
    return [EliteTableRow(b, int(counts[b][0]), int(counts[b][1])) for b in BUCKETS if b in counts]


def elite_table(persons, cutoff, window, new_firms=None) -> list:
    """Prior-firm buckets at ``cutoff`` and the new firms their members joined in ``window``.

    ``new_firms`` restricts created firms to a set of company ids (e.g. those
    Opened in the window); otherwise any company first joined in the window
    that the person did not hold before counts.
    """
    cutoff = YearMonth.parse(cutoff)
    start, end = (YearMonth.parse(w) for w in window)
    if not cutoff < start:
        raise ValueError("cutoff must precede the window")
    totals = Counter()
    created = Counter()
    for p in persons:
        first = p.first_appointment()
        prior = {c for c, m in first.items() if m <= cutoff}
        b = bucket_of(len(prior))
        if b is None:
            continue
        totals[b] += 1
        created[b] += sum(
            1 for c, m in first.items()
            if start <= m <= end and c not in prior and (new_firms is None or c in new_firms)
        )
    return [EliteTableRow(b, totals[b], created[b]) for b in BUCKETS]


def write_elite_table(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_pre_existing_firms", "pre_pandemic_total", "firms_created_during_pandemic",
                    "creation_prob_pct"])
        for r in rows:
            w.writerow([r.bucket, r.pre_pandemic_total, r.created_during, f"{r.creation_percent:.1f}"])


# -- industry experience -----------------------------------------------------

def nearest_rank_quantile(x, pct):
    """Empirical quantile by the nearest-rank rule: the ceil(pct/100 * n)-th smallest."""
    xs = np.sort(np.asarray(x, dtype=float))
    if len(xs) == 0:
        raise ValueError("empty sample")
    k = max(1, math.ceil(pct / 100.0 * len(xs) - 1e-12))
    return float(xs[k - 1])


def winsorize_upper(x, pct=99.9):
    x = np.asarray(x, dtype=float)
    return np.minimum(x, nearest_rank_quantile(x, pct))


@dataclass(frozen=True)
class ExperienceCell:
    section: str
    period: str
    n: int
    mean: float
    lower: float
    upper: float
    raw_mean: float


def industry_experience(observations, periods=None, pct=99.9, z=1.959963984540054):
    """Mean prior-firm count of new-firm officers per (SIC section, period).

    ``observations`` yields ``(section, month, prior_count)``.  Counts are
    winsorised at ``pct`` (nearest rank) within each cell; the interval is
    mean +/- z * sd / sqrt(n).  Empty cells are absent from the result.
    """
    if periods is None:
        periods = {"PreCovid": PRE_COVID, "DuringCovid": DURING_COVID}
    spans = {k: tuple(YearMonth.parse(x) for x in v) for k, v in periods.items()}
    cells = defaultdict(list)
    for section, month, count in observations:
        month = YearMonth.parse(month)
        for name, (a, b) in spans.items():
            if a <= month <= b:
                cells[(section, name)].append(count)
    out = {}
    for (section, name), vals in sorted(cells.items()):
        raw = np.asarray(vals, dtype=float)
        wz = winsorize_upper(raw, pct)
        mean = float(wz.mean())
        half = z * float(wz.std(ddof=1)) / math.sqrt(len(wz)) if len(wz) > 1 else 0.0
        out[(section, name)] = ExperienceCell(section, name, len(wz), mean, mean - half,
                                              mean + half, float(raw.mean()))
    return out


def write_persons(path, persons, cutoff):
    cutoff = YearMonth.parse(cutoff)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["person_id", "first_forename", "surname", "birth_month", "gender", "region",
                    "n_appointments", "prior_firm_count_at_cutoff", "provenance", "flags"])
        for p in persons:
            w.writerow([p.person_id, p.key.first_forename, p.key.surname,
                        str(p.key.birth_month or ""), p.gender, p.region, len(p.appointments),
                        p.prior_firm_count(cutoff + 1), p.match_provenance(),
                        ";".join(sorted(p.flags))])

