"""Parsing and normalisation of monthly company snapshots and officer files."""
from __future__ import annotations

import csv
import datetime as dt
import json
import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .months import YearMonth

# Verbatim word list used to spot officers that are companies rather than people.
CORPORATE_WORDS = frozenset({
    "COMMERCIAL", "COMPANY", "CORPORATE", "DETAILS", "EXCHANGE", "HOLDINGS",
    "INTERNATIONAL", "INVESTMENTS", "LIMITED", "LTD", "NON-DESTRUCTIVE",
    "PARTNERSHIPS", "PRIVATE", "PROSECUTION", "SECRETARIAT", "SERVICES",
})

COMPANY_COLUMNS = {
    "company_id": "CompanyNumber",
    "name": "CompanyName",
    "status": "CompanyStatus",
    "incorporation_date": "IncorporationDate",
    "dissolution_date": "DissolutionDate",
    "sic_1": "SICCode.SicText_1",
    "sic_2": "SICCode.SicText_2",
    "sic_3": "SICCode.SicText_3",
    "sic_4": "SICCode.SicText_4",
    "postcode": "RegAddress.PostCode",
}
COMPANY_REQUIRED = ("company_id", "status")

OFFICER_COLUMNS = {
    "company_id": "CompanyNumber",
    "name": "Name",
    "birth_month": "DateOfBirth",
    "appointment_date": "AppointmentDate",
    "resignation_date": "ResignationDate",
    "postcode": "PostCode",
    "corporate": "CorporateIndicator",
}
OFFICER_REQUIRED = ("company_id", "name")

_SIC = re.compile(r"^\s*(\d{5})\b")
_SNAPSHOT_FILE = re.compile(r"^(companies|officers)_(\d{4}-\d{2})\.csv$")


class SchemaError(ValueError):
    """A mandatory column is missing from an input file."""


@dataclass(frozen=True)
class Rejection:
    file: str
    row: int
    reason: str

    def to_json(self) -> str:
        return json.dumps({"file": self.file, "row": self.row, "reason": self.reason}, sort_keys=True)


@dataclass(frozen=True)
class CompanySnapshotRecord:
    company_id: str
    name: str
    status: str
    snapshot_month: YearMonth
    incorporation_date: dt.date | None = None
    dissolution_date: dt.date | None = None
    sic_codes: tuple = ()
    postcode: str | None = None


@dataclass(frozen=True)
class OfficerEventRecord:
    officer_raw_name: str
    company_id: str
    record_month: YearMonth
    birth_month: YearMonth | None = None
    appointment_date: dt.date | None = None
    resignation_date: dt.date | None = None
    correspondence_postcode: str | None = None
    registry_corporate: bool = False


# -- names -----------------------------------------------------------------

@lru_cache(maxsize=1)
def honorifics() -> frozenset:
    text = resources.files("firmshock").joinpath("data/honorifics.txt").read_text()
    return frozenset(ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#"))


def _clean(text: str) -> str:
    text = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode("ascii").upper()
    text = re.sub(r"[^A-Z0-9\s-]", "", text)
    return " ".join(text.split())


@dataclass(frozen=True)
class NormalizedName:
    surname: str
    forenames: str

    @property
    def usable(self) -> bool:
        return bool(self.surname)

    @property
    def first_forename(self) -> str:
        return self.forenames.split(" ", 1)[0] if self.forenames else ""

    def __str__(self) -> str:
        return f"{self.surname}, {self.forenames}".rstrip()


def normalize_name(raw) -> NormalizedName:
    """Uppercase, strip punctuation (hyphens kept) and titles, split surname/forenames.

    ``"SURNAME, Forenames"`` is split at the first comma; without a comma the
    last token is the surname.
    """
    raw = str(raw)
    titles = honorifics()
    if "," in raw:
        sur, _, fore = raw.partition(",")
        surname = _clean(sur)
        tokens = _clean(fore).split()
    else:
        tokens = _clean(raw).split()
        surname = tokens.pop() if tokens else ""
    forenames = " ".join(t for t in tokens if t not in titles and t.strip("-"))
    return NormalizedName(surname, forenames)


def name_tokens(raw: str) -> list[str]:
    return _clean(raw).split()


def is_corporate_name(raw: str) -> bool:
    """Whole-token match against the corporate word list."""
    return any(tok in CORPORATE_WORDS for tok in name_tokens(raw))


def filter_corporate_officers(records):
    """Split officer records into (persons, companies, corporate_share).

    A record is corporate when the registry flags it or its name contains a
    corporate word as a whole token.
    """
    persons, companies = [], []
    for rec in records:
        if rec.registry_corporate or is_corporate_name(rec.officer_raw_name):
            companies.append(rec)
        else:
            persons.append(rec)
    total = len(persons) + len(companies)
    return persons, companies, (len(companies) / total if total else 0.0)


# -- dates & fields ----------------------------------------------------------

class _BadValue(ValueError):
    pass


def parse_date(text, fmt="iso"):
    text = (text or "").strip()
    if not text:
        return None
    forms = {"iso": ("%Y-%m-%d",), "dmy": ("%d/%m/%Y",), "auto": ("%Y-%m-%d", "%d/%m/%Y")}[fmt]
    for f in forms:
        try:
            return dt.datetime.strptime(text, f).date()
        except ValueError:
            continue
    raise _BadValue(text)


def parse_birth_month(text, fmt="iso"):
    text = (text or "").strip()
    if not text:
        return None
    m = re.fullmatch(r"(\d{4})-(\d{1,2})(?:-\d{1,2})?", text)
    if m and fmt in ("iso", "auto"):
        mo = int(m.group(2))
        if 1 <= mo <= 12:
            return YearMonth.of(int(m.group(1)), mo)
    m = re.fullmatch(r"(?:\d{1,2}/)?(\d{1,2})/(\d{4})", text)
    if m and fmt in ("dmy", "auto"):
        mo = int(m.group(1))
        if 1 <= mo <= 12:
            return YearMonth.of(int(m.group(2)), mo)
    raise _BadValue(text)


def parse_sic(text):
    """Five-digit SIC code from a ``"62012 - description"`` cell, or None."""
    text = (text or "").strip()
    if not text or text.upper().startswith("NONE SUPPLIED"):
        return None
    m = _SIC.match(text)
    if not m:
        raise _BadValue(text)
    return m.group(1)


def read_schema_map(path) -> dict:
    """Column-mapping override file: ``field = column header`` per line, ``#`` comments."""
    out = {}
    for ln in Path(path).read_text().splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        key, sep, val = ln.partition("=")
        if not sep:
            raise SchemaError(f"bad schema-map line: {ln!r}")
        out[key.strip()] = val.strip()
    return out


def _open_reader(stream, columns, required, label):
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{label}: empty file") from None
    pos = {h: i for i, h in enumerate(header)}
    index = {}
    for fieldname, col in columns.items():
        if col in pos:
            index[fieldname] = pos[col]
        elif fieldname in required:
            raise SchemaError(f"{label}: missing mandatory column {col!r}")
    return reader, index


def _get(row, index, key):
    i = index.get(key)
    if i is None or i >= len(row):
        return ""
    return row[i].strip()


def parse_company_snapshot(stream, month, *, schema=None, date_format="iso", window=None,
                           source="companies"):
    """Parse one snapshot file; returns ``(records, rejections)``.

    Malformed rows are logged and skipped; a missing mandatory column raises
    :class:`SchemaError`.
    """
    month = YearMonth.parse(month)
    if window and not (window[0] <= month <= window[1]):
        raise ValueError(f"snapshot month {month} outside study window")
    columns = {**COMPANY_COLUMNS, **(schema or {})}
    reader, index = _open_reader(stream, columns, COMPANY_REQUIRED, source)
    records, rejects = [], []
    for rowno, row in enumerate(reader, start=1):
        if not any(c.strip() for c in row):
            continue
        cid = _get(row, index, "company_id")
        if not cid:
            rejects.append(Rejection(source, rowno, "missing company id"))
            continue
        try:
            inc = parse_date(_get(row, index, "incorporation_date"), date_format)
            dis = parse_date(_get(row, index, "dissolution_date"), date_format)
        except _BadValue:
            rejects.append(Rejection(source, rowno, "invalid date"))
            continue
        try:
            sics = tuple(c for c in (parse_sic(_get(row, index, f"sic_{k}")) for k in range(1, 5)) if c)
        except _BadValue:
            rejects.append(Rejection(source, rowno, "invalid sic code"))
            continue
        records.append(CompanySnapshotRecord(
            company_id=cid,
            name=_clean(_get(row, index, "name")),
            status=_get(row, index, "status"),
            snapshot_month=month,
            incorporation_date=inc,
            dissolution_date=dis,
            sic_codes=sics,
            postcode=_get(row, index, "postcode") or None,
        ))
    return records, rejects


def parse_officer_file(stream, month, *, schema=None, date_format="iso", source="officers"):
    """Parse one officer appointment file; returns ``(records, rejections)``."""
    month = YearMonth.parse(month)
    columns = {**OFFICER_COLUMNS, **(schema or {})}
    reader, index = _open_reader(stream, columns, OFFICER_REQUIRED, source)
    records, rejects = [], []
    for rowno, row in enumerate(reader, start=1):
        if not any(c.strip() for c in row):
            continue
        cid = _get(row, index, "company_id")
        if not cid:
            rejects.append(Rejection(source, rowno, "missing company id"))
            continue
        name = _get(row, index, "name")
        if not normalize_name(name).usable:
            rejects.append(Rejection(source, rowno, "unusable name"))
            continue
        try:
            dob = parse_birth_month(_get(row, index, "birth_month"), date_format)
        except _BadValue:
            rejects.append(Rejection(source, rowno, "invalid birth month"))
            continue
        try:
            app = parse_date(_get(row, index, "appointment_date"), date_format)
            res = parse_date(_get(row, index, "resignation_date"), date_format)
        except _BadValue:
            rejects.append(Rejection(source, rowno, "invalid date"))
            continue
        if app and res and res < app:
            rejects.append(Rejection(source, rowno, "resignation before appointment"))
            continue
        corp = _get(row, index, "corporate").upper() in {"Y", "YES", "1", "TRUE"}
        records.append(OfficerEventRecord(
            officer_raw_name=name,
            company_id=cid,
            record_month=month,
            birth_month=dob,
            appointment_date=app,
            resignation_date=res,
            correspondence_postcode=_get(row, index, "postcode") or None,
            registry_corporate=corp,
        ))
    return records, rejects


# -- archives ----------------------------------------------------------------

@dataclass
class SnapshotArchive:
    months: list
    records: dict = field(default_factory=dict)  # month -> list of records
    row_counts: dict = field(default_factory=dict)
    rejections: list = field(default_factory=list)


def list_monthly_files(directory, kind):
    """``{YearMonth: path}`` for ``<kind>_YYYY-MM.csv`` files, checked for gaps."""
    found = {}
    for p in sorted(Path(directory).iterdir()):
        m = _SNAPSHOT_FILE.match(p.name)
        if m and m.group(1) == kind:
            found[YearMonth.parse(m.group(2))] = p
    months = sorted(found)
    for a, b in zip(months, months[1:]):
        if b - a != 1:
            raise ValueError(f"{kind} snapshots have a gap between {a} and {b}")
    return {k: found[k] for k in months}


def load_archive(directory, kind="companies", *, schema=None, date_format="iso"):
    files = list_monthly_files(directory, kind)
    parse = parse_company_snapshot if kind == "companies" else parse_officer_file
    arch = SnapshotArchive(months=list(files))
    for month, path in files.items():
        with open(path, newline="", encoding="utf-8") as fh:
            recs, rej = parse(fh, month, schema=schema, date_format=date_format, source=path.name)
        arch.records[month] = recs
        arch.row_counts[month] = len(recs) + len(rej)
        arch.rejections.extend(rej)
    return arch


def _d(x):
    return x.isoformat() if x else ""


COMPANY_OUT = ["company_id", "name", "status", "incorporation_date", "dissolution_date",
               "sic_codes", "postcode", "snapshot_month"]
OFFICER_OUT = ["officer_raw_name", "surname", "forenames", "company_id", "birth_month",
               "appointment_date", "resignation_date", "correspondence_postcode",
               "record_month", "corporate"]


def write_companies(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPANY_OUT)
        for r in records:
            w.writerow([r.company_id, r.name, r.status, _d(r.incorporation_date),
                        _d(r.dissolution_date), ";".join(r.sic_codes), r.postcode or "",
                        str(r.snapshot_month)])


def write_officers(path, records, corporate_flags):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OFFICER_OUT)
        for r, corp in zip(records, corporate_flags):
            nm = normalize_name(r.officer_raw_name)
            w.writerow([r.officer_raw_name, nm.surname, nm.forenames, r.company_id,
                        str(r.birth_month) if r.birth_month else "", _d(r.appointment_date),
                        _d(r.resignation_date), r.correspondence_postcode or "",
                        str(r.record_month), int(corp)])


def read_normalized_companies(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(CompanySnapshotRecord(
                company_id=row["company_id"], name=row["name"], status=row["status"],
                snapshot_month=YearMonth.parse(row["snapshot_month"]),
                incorporation_date=parse_date(row["incorporation_date"]),
                dissolution_date=parse_date(row["dissolution_date"]),
                sic_codes=tuple(c for c in row["sic_codes"].split(";") if c),
                postcode=row["postcode"] or None,
            ))
    return out


def read_normalized_officers(path):
    """Normalised officer rows as ``(record, is_corporate)`` pairs."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = OfficerEventRecord(
                officer_raw_name=row["officer_raw_name"], company_id=row["company_id"],
                record_month=YearMonth.parse(row["record_month"]),
                birth_month=YearMonth.parse(row["birth_month"]) if row["birth_month"] else None,
                appointment_date=parse_date(row["appointment_date"]),
                resignation_date=parse_date(row["resignation_date"]),
                correspondence_postcode=row["correspondence_postcode"] or None,
                registry_corporate=row["corporate"] == "1",
            )
            out.append((rec, row["corporate"] == "1"))
    return out


def write_rejections(path, rejections):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rejections:
            fh.write(r.to_json() + "\n")


# -- industry sections -------------------------------------------------------

# SIC 2007 two-digit divisions -> lettered sections
_SECTION_RANGES = (
    (1, 3, "A"), (5, 9, "B"), (10, 33, "C"), (35, 35, "D"), (36, 39, "E"), (41, 43, "F"),
    (45, 47, "G"), (49, 53, "H"), (55, 56, "I"), (58, 63, "J"), (64, 66, "K"), (68, 68, "L"),
    (69, 75, "M"), (77, 82, "N"), (84, 84, "O"), (85, 85, "P"), (86, 88, "Q"), (90, 93, "R"),
    (94, 96, "S"), (97, 98, "T"), (99, 99, "U"),
)
SECTION_NAMES = {
    "A": "Agriculture, Forestry and Fishing", "B": "Mining and Quarrying",
    "C": "Manufacturing", "D": "Electricity, Gas, Steam and Air Conditioning",
    "E": "Water Supply; Sewerage and Waste Management", "F": "Construction",
    "G": "Wholesale and Retail Trade; Vehicle Repair", "H": "Transportation and Storage",
    "I": "Accommodation and Food Service Activities", "J": "Information and Communication",
    "K": "Financial and Insurance Activities", "L": "Real Estate Activities",
    "M": "Professional, Scientific and Technical", "N": "Administrative and Support Services",
    "O": "Public Administration and Defence", "P": "Education",
    "Q": "Human Health and Social Work", "R": "Arts, Entertainment and Recreation",
    "S": "Other Service Activities", "T": "Activities of Households as Employers",
    "U": "Activities of Extraterritorial Organisations",
}


def sic_section(code) -> str | None:
    """Section letter for a five-digit SIC code, or None if the division is unassigned."""
    if not code:
        return None
    div = int(str(code)[:2])
    for lo, hi, letter in _SECTION_RANGES:
        if lo <= div <= hi:
            return letter
    return None
