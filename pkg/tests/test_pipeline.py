import json
import shutil
from pathlib import Path

import pytest

from firmshock import pipeline
from firmshock.months import YearMonth, month_range
from firmshock.pipeline import PipelineConfig, ValidationError, run_pipeline, sector_table

# the small fixture spans 2018-07..2019-06, so shift every window into it
WINDOWS = {
    "train": "2011-01:2018-10",
    "eval": "2018-12:2019-06",
    "pre_covid": "2018-08:2018-11",
    "during_covid": "2018-12:2019-06",
    "cutoff": "2018-11",
    "budget": "15",
    "chow_candidate": "2018-12",
}


@pytest.fixture
def workdir(small_fixture, tmp_path):
    d = tmp_path / "fx"
    shutil.copytree(small_fixture, d)
    return d


def _cfg(d, **extra):
    return PipelineConfig.from_file(d / "pipeline.conf", {**WINDOWS, **extra})


def _status(result):
    return {e["stage"]: e["status"] for e in result.manifest}


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def test_run_then_cached_and_reproducible(workdir):
    first = run_pipeline(_cfg(workdir))
    assert first.exit_code == 0
    assert list(_status(first)) == list(pipeline.STAGES)
    assert set(_status(first).values()) == {"ok"}
    manifest = json.loads((workdir / "out" / "manifest.json").read_text())
    assert len(manifest["stages"]) == 8
    assert all(len(e["input_hash"]) == 64 and len(e["output_hash"]) == 64 for e in manifest["stages"])

    again = run_pipeline(_cfg(workdir))
    assert set(_status(again).values()) == {"cached"}

    fresh = run_pipeline(_cfg(workdir, output="out2"))
    assert fresh.exit_code == 0
    assert _tree(workdir / "out") == _tree(workdir / "out2")

    fit_status = (workdir / "out" / "fit" / "fit_status.csv").read_text()
    assert "opened,ok" in fit_status
    assert (workdir / "out" / "excess" / "opened.csv").exists()
    assert (workdir / "out" / "report" / "sector_table.csv").read_text().startswith("section,name,pct_female")


def test_input_byte_change_invalidates(workdir):
    run_pipeline(_cfg(workdir))
    snap = sorted((workdir / "snapshots").iterdir())[-1]
    raw = bytearray(snap.read_bytes())
    raw[-2] = ord("X") if raw[-2] != ord("X") else ord("Y")
    snap.write_bytes(bytes(raw))
    before = json.loads((workdir / "out" / "manifest.json").read_text())["stages"][0]["input_hash"]
    res = run_pipeline(_cfg(workdir))
    assert _status(res)["ingest"] == "ok"
    assert res.manifest[0]["input_hash"] != before


def test_param_change_reruns_only_downstream(workdir):
    run_pipeline(_cfg(workdir))
    res = run_pipeline(_cfg(workdir, levels="90"))
    st = _status(res)
    assert st["ingest"] == st["diff"] == st["fit"] == "cached"
    assert st["excess"] == "ok"


def test_hash_inputs_sensitive():
    assert pipeline.hash_inputs([], {"a": 1}) != pipeline.hash_inputs([], {"a": 2})
    assert pipeline.hash_inputs([], {"a": 1}) == pipeline.hash_inputs([], {"a": 1})


def test_stage_failure_halts_downstream(workdir, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("no convergence")

    monkeypatch.setattr(pipeline, "stage_fit", boom)
    res = run_pipeline(_cfg(workdir))
    st = _status(res)
    assert res.exit_code == pipeline.EXIT_STAGE
    assert st["series"] == "ok" and st["fit"] == "failed"
    assert all(st[s] == "not run" for s in ("excess", "breaks", "report"))
    assert "no convergence" in res.manifest[4]["error"]
    # a later good run recomputes the failed stage
    monkeypatch.undo()
    assert run_pipeline(_cfg(workdir)).exit_code == 0


def test_empty_snapshot_dir(workdir):
    for f in (workdir / "snapshots").iterdir():
        f.unlink()
    with pytest.raises(ValidationError):
        run_pipeline(_cfg(workdir))


@pytest.mark.parametrize("override", [
    {"train": "2011-01:2019-01"},          # overlaps evaluation
    {"pre_covid": "2018-08:2018-12"},     # touches the Covid window
    {"cutoff": "2019-01"},
    {"convention": "sideways"},
    {"strata": "sic,postcode"},
    {"historic": "missing_dir"},
])
def test_config_validation(workdir, override):
    with pytest.raises(ValidationError):
        _cfg(workdir, **override).validate()


def test_config_parsing(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text("snapshots = s  # comment\nofficers = o\noutput = out\nmax_order = 4\nlevels = 80,95\n")
    cfg = PipelineConfig.from_file(p)
    assert cfg.snapshots == tmp_path / "s" and cfg.bounds.max_order == 4 and cfg.levels == (80, 95)
    p.write_text("snapshots = s\nofficers = o\noutput = out\nflavour = mint\n")
    with pytest.raises(ValidationError, match="unknown config key"):
        PipelineConfig.from_file(p)
    p.write_text("snapshots s\n")
    with pytest.raises(ValidationError):
        PipelineConfig.from_file(p)
    with pytest.raises(ValidationError):
        PipelineConfig.from_file(tmp_path / "nope.conf")


# -- sector table arithmetic ------------------------------------------------------

PRE = (YearMonth.parse("2019-08"), YearMonth.parse("2020-02"))
DUR = (YearMonth.parse("2020-03"), YearMonth.parse("2021-06"))


def _toy(opened_per_month_pre=3, opened_per_month_dur=6, genders=("Woman", "Woman")):
    firms = [{"company_id": f"C{i}", "section": "I", "first_active": "2019-01", "last_active": "2021-06"}
             for i in range(len(genders))]
    persons = [{"person_id": f"P{i}", "gender": g, "birth_month": "1980-01"} for i, g in enumerate(genders)]
    appointments = [{"person_id": f"P{i}", "company_id": f"C{i}", "month": "2019-01", "resignation_date": ""}
                    for i in range(len(genders))]
    months = month_range(YearMonth.parse("2019-08"), YearMonth.parse("2021-06"))
    active = [{"month": str(m), "section": "I", "region": pipeline.LONDON, "active": "10"} for m in months]
    events = []
    for m in months:
        k = opened_per_month_dur if m >= DUR[0] else opened_per_month_pre
        events += [{"company_id": "C0", "month": str(m), "event": "Opened"}] * k
    return firms, active, events, appointments, persons


def _row(rows):
    (row,) = rows
    return dict(zip(pipeline.SECTOR_HEADER, row))


def test_sector_table_all_women():
    row = _row(sector_table(*_toy(), PRE, DUR))
    assert row["pct_female"] == "1.00"
    assert row["mean_age"] == "40.00" and row["pct_over_60"] == "0.00"
    assert row["firms_ratio"] == "1.00" and row["london_registered_share_ratio"] == "1.00"


def test_sector_table_doubled_openings():
    row = _row(sector_table(*_toy(genders=("Woman", "Man")), PRE, DUR))
    assert row["open_ratio"] == "2.00"
    assert row["pct_female"] == "0.50"
    assert row["close_ratio"] == ""  # no closures in either window


def test_sector_table_uncovered_windows():
    firms, active, events, appts, persons = _toy()
    active = [r for r in active if r["month"] < "2020-06"]
    row = _row(sector_table(firms, active, events, appts, persons, PRE, DUR))
    assert row["open_ratio"] == "" and "do not span" in row["note"]
