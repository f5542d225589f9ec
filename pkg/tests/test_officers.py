import datetime as dt
import itertools
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from firmshock import officers
from firmshock.ingest import OfficerEventRecord
from firmshock.months import YearMonth
from firmshock.officers import (
    MAN,
    UNKNOWN,
    UNRESOLVED,
    WOMAN,
    EliteTableRow,
    GenderProviderTable,
    InvalidRecordError,
    classify_first_time,
    compute_age,
    elite_table,
    industry_experience,
    infer_gender,
    levenshtein,
    map_region,
    nearest_rank_quantile,
    partition_signature,
    resolve_identities,
    winsorize_upper,
)


def brute_levenshtein(a, b):
    """Textbook full-matrix dynamic program."""
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[-1][-1]


words = st.text(alphabet="ABCDEJKNOST", max_size=12)


@pytest.mark.parametrize("a,b,d", [("", "ABC", 3), ("KITTEN", "SITTING", 3), ("JON", "JOHN", 1),
                                   ("JANE", "JOHN", 3), ("SAME", "SAME", 0)])
def test_levenshtein_examples(a, b, d):
    assert levenshtein(a, b) == d == brute_levenshtein(a, b)


@given(words, words)
def test_levenshtein_matches_brute_force(a, b):
    assert levenshtein(a, b) == brute_levenshtein(a, b)


@given(words, words, words)
def test_levenshtein_is_a_metric(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert (levenshtein(a, b) == 0) == (a == b)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_age_rule():
    assert compute_age("1989-01", "2019-01") == 30
    assert compute_age("1989-01", "2020-01") == 31
    assert compute_age("1989-02", "2019-01") == 29
    with pytest.raises(InvalidRecordError):
        compute_age("2019-02", "2019-01")


def _table(d):
    return GenderProviderTable({k: (v, 0.9) for k, v in d.items()})


def test_gender_votes():
    a, b, c = _table({"SAM": MAN}), _table({"SAM": MAN}), _table({})
    assert infer_gender("Sam", [a, b, c]) == MAN
    assert infer_gender("Sam", [a, _table({"SAM": WOMAN})]) == UNRESOLVED
    assert infer_gender("Sam", [c]) == UNRESOLVED
    with pytest.raises(ValueError):
        infer_gender("Sam", [])


@given(st.lists(st.sampled_from([MAN, WOMAN, UNKNOWN]), min_size=1, max_size=5), st.randoms())
def test_gender_vote_order_free(labels, rnd):
    provs = [_table({"ALEX": lab}) for lab in labels]
    shuffled = provs[:]
    rnd.shuffle(shuffled)
    assert infer_gender("ALEX", provs) == infer_gender("ALEX", shuffled)


def test_gender_table_file(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# locale: GB\nMARY,female,0.98\nALEX,unknown,0.4\n")
    t = GenderProviderTable.read(p)
    assert t.locale == "GB" and t.lookup("mary") == (WOMAN, 0.98)
    assert GenderProviderTable.read(p, min_confidence=0.99).lookup("MARY")[0] == UNKNOWN
    p.write_text("MARY,W,1.5\n")
    with pytest.raises(ValueError):
        GenderProviderTable.read(p)


def test_remote_provider_disabled():
    with pytest.raises(RuntimeError):
        officers.RemoteGenderProvider().lookup("MARY")


@pytest.mark.parametrize("pc,region", [
    ("EC1A 1BB", "Greater London"), ("ec1a1bb", "Greater London"), ("M1 1AE", "North West"),
    ("EH1 1YZ", "Scotland"), ("ZZ99 9ZZ", officers.EXCLUDED), ("", officers.EXCLUDED),
    ("10115", officers.EXCLUDED),
])
def test_region_lookup(pc, region):
    assert map_region(pc) == region


def test_longest_prefix_wins():
    table = {"B": "West Midlands", "BT": "Northern Ireland"}
    assert map_region("BT1 1AA", table) == "Northern Ireland"
    assert map_region("B1 1AA", table) == "West Midlands"


def rec(name, cid, dob="1989-01", app=None, month="2020-01"):
    return OfficerEventRecord(name, cid, YearMonth.parse(month),
                              YearMonth.parse(dob) if dob else None,
                              dt.date.fromisoformat(app) if app else None)


def test_exact_merge():
    people = resolve_identities([rec("SMITH, John", "1"), rec("SMITH, John", "2")])
    assert len(people) == 1 and len(people[0].appointments) == 2
    assert people[0].match_provenance() == "exact"


def test_fuzzy_merge_and_distinct():
    people = resolve_identities([rec("SMITH, John", "1"), rec("SMITH, Jon", "2")])
    assert len(people) == 1 and people[0].match_provenance() == "fuzzy(1)"
    people = resolve_identities([rec("SMITH, John", "1"), rec("SMITH, Jane", "2")])
    assert len(people) == 2


def test_chain_is_flagged_ambiguous():
    # JON-JOHN (1) and JOHN-JOHNS (1) link, but JON-JOHNS is 2 apart
    people = resolve_identities([rec("X, Jon", "1"), rec("X, John", "2"), rec("X, Johns", "3")])
    assert len(people) == 1 and "ambiguous" in people[0].flags


def test_missing_dob_never_merges():
    people = resolve_identities([rec("SMITH, John", "1", dob=None), rec("SMITH, John", "2", dob=None),
                                 rec("SMITH, John", "3")])
    assert len(people) == 3
    assert sum("no_dob" in p.flags for p in people) == 2


def test_middle_names_do_not_split():
    people = resolve_identities([rec("SMITH, John Robert", "1"), rec("SMITH, John", "2")])
    assert len(people) == 1


NAMES = ["SMITH, John", "SMITH, Jon", "SMITH, Johnny", "SMITH, Jane", "JONES, Ann", "JONES, Anne",
         "JONES, Anna", "DOE, Jo"]
record_lists = st.lists(
    st.tuples(st.sampled_from(NAMES), st.sampled_from(["1", "2", "3", "4"]),
              st.sampled_from(["1980-01", "1980-02", None]),
              st.sampled_from([None, "2019-01-05", "2020-06-01"])),
    max_size=20,
)


@given(record_lists, st.randoms())
def test_resolution_is_order_invariant(items, rnd):
    recs = [rec(n, c, d, a) for n, c, d, a in items]
    shuffled = recs[:]
    rnd.shuffle(shuffled)
    a, b = resolve_identities(recs), resolve_identities(shuffled)
    assert partition_signature(a) == partition_signature(b)
    assert [p.person_id for p in a] == [p.person_id for p in b]
    assert [p.key for p in a] == [p.key for p in b]


@given(record_lists, st.integers(0, 2))
def test_raising_threshold_only_merges(items, k):
    recs = [rec(n, c, d, a) for n, c, d, a in items]
    low, high = resolve_identities(recs, k), resolve_identities(recs, k + 1)
    # every low-threshold person's records sit inside one high-threshold person
    owner = {}
    for i, p in enumerate(high):
        for n in p.name_variants:
            for a in p.appointments:
                owner[(n, p.key.birth_month, a.company_id, a.appointment_date)] = i
    for p in low:
        targets = {owner[(n, p.key.birth_month, a.company_id, a.appointment_date)]
                   for n in p.name_variants for a in p.appointments
                   if (n, p.key.birth_month, a.company_id, a.appointment_date) in owner}
        assert len(targets) <= 1
    assert len(high) <= len(low)


def test_prior_firm_count_and_first_time():
    (p,) = resolve_identities([rec("A, Bo", "1", app="2010-03-01"), rec("A, Bo", "1", app="2012-03-01"),
                               rec("A, Bo", "2", app="2020-05-01")])
    assert p.prior_firm_count("2010-03") == 0
    assert p.prior_firm_count("2010-04") == 1
    assert p.prior_firm_count("2030-01") == 2
    counts = [p.prior_firm_count(YearMonth.parse("2009-01") + i) for i in range(200)]
    assert counts == sorted(counts)
    assert classify_first_time(p, "2020-05", company_id="2") == "AlreadyOfficer"
    (q,) = resolve_identities([rec("B, Al", "9", app="2020-05-01")])
    assert classify_first_time(q, "2020-05", company_id="9") == "FirstTime"
    assert officers.is_elite(p, "2030-01") and not officers.is_elite(q, "2030-01")


def test_elite_arithmetic_synthetic():
    recs = [rec(f"P{i}, Al", f"old{i}", app="2018-01-01") for i in range(10)]
    recs += [rec(f"P{i}, Al", f"new{i}", app="2020-06-01") for i in range(3)]
    rows = {r.bucket: r for r in elite_table(resolve_identities(recs), "2020-02", ("2020-03", "2021-06"))}
    assert rows["1"].pre_pandemic_total == 10 and rows["1"].created_during == 3
    assert rows["1"].creation_percent == 30.0
    assert sum(r.pre_pandemic_total for r in rows.values()) == 10


def test_elite_totals_partition_persons():
    rng = random.Random(3)
    recs = []
    for i in range(60):
        for k in range(rng.randint(1, 12)):
            recs.append(rec(f"S{i}, Al", f"c{i}_{k}", app=f"{rng.randint(2008, 2021)}-0{rng.randint(1, 9)}-01"))
    persons = resolve_identities(recs)
    rows = elite_table(persons, "2020-02", ("2020-03", "2021-06"))
    holders = sum(1 for p in persons if p.prior_firm_count("2020-03") >= 1)
    assert sum(r.pre_pandemic_total for r in rows) == holders
    with pytest.raises(ValueError):
        elite_table(persons, "2020-03", ("2020-03", "2021-06"))


def test_creation_ratio_may_exceed_one():
    assert EliteTableRow("10+", 16, 25).creation_percent == 156.2


def test_winsorisation_quantile_rule():
    assert nearest_rank_quantile([1, 1, 1, 1000], 99.9) == 1000
    assert winsorize_upper([1, 1, 1, 1000]).mean() == pytest.approx(250.75)
    x = np.array([1.0] * 999 + [1e6])
    # ceil(0.999 * 1000) = 999th smallest is 1, so the outlier is capped
    assert winsorize_upper(x).mean() == 1.0
    assert x.mean() == pytest.approx(1000.999)
    x = np.array([1.0] * 998 + [1e6, 1e6])
    assert winsorize_upper(x).mean() == pytest.approx(x.mean())


def brute_quantile(x, pct):
    xs = sorted(x)
    for v in xs:
        if sum(y <= v for y in xs) >= pct / 100 * len(xs) - 1e-12:
            return v


@given(st.lists(st.integers(0, 50), min_size=1, max_size=40), st.floats(1, 100))
def test_nearest_rank_matches_definition(x, pct):
    assert nearest_rank_quantile(x, pct) == brute_quantile(x, pct)


def test_industry_experience_cells():
    obs = [("G", "2019-09", 2)] * 5 + [("G", "2020-05", 1), ("G", "2020-06", 3), ("J", "2018-01", 4)]
    cells = industry_experience(obs)
    pre = cells[("G", "PreCovid")]
    assert (pre.n, pre.mean, pre.lower, pre.upper) == (5, 2.0, 2.0, 2.0)
    dur = cells[("G", "DuringCovid")]
    assert dur.mean == 2.0 and dur.lower < 2.0 < dur.upper
    assert ("J", "PreCovid") not in cells and ("J", "DuringCovid") not in cells


def test_write_persons_columns(tmp_path):
    people = resolve_identities([rec("SMITH, John", "1", app="2019-01-01")])
    officers.write_persons(tmp_path / "p.csv", people, "2020-02")
    head, row = (tmp_path / "p.csv").read_text().splitlines()
    assert head.startswith("person_id,first_forename,surname,birth_month,gender,region")
    assert row.split(",")[:4] == ["P0000001", "JOHN", "SMITH", "1989-01"]
