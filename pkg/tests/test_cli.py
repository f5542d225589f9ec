import json
import shutil

import pytest

from firmshock.cli import main
from firmshock.sarima import SarimaSpec, simulate


@pytest.fixture
def workdir(small_fixture, tmp_path):
    d = tmp_path / "fx"
    shutil.copytree(small_fixture, d)
    return d


@pytest.fixture
def series_csv(tmp_path):
    s = simulate(SarimaSpec(1, 0, 0, 0, 1, 1, 12), phi=[0.5], Theta=[-0.4], n=126, seed=3,
                 start="2011-01")
    p = tmp_path / "opened.csv"
    p.write_text(s.to_csv())
    return p


def test_usage_errors_exit_2(capsys):
    for argv in ([], ["fit"], ["excess", "--series", "x.csv", "--out", "o.csv", "--train", "2020-05"]):
        with pytest.raises(SystemExit) as e:
            main(argv)
        assert e.value.code == 2


def test_run_missing_config_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.conf")]) == 2


def test_ingest_empty_dir_exit_2(tmp_path):
    (tmp_path / "s").mkdir()
    (tmp_path / "o").mkdir()
    assert main(["ingest", "--snapshots", str(tmp_path / "s"), "--officers", str(tmp_path / "o"),
                 "--out", str(tmp_path / "n")]) == 2


def test_stage_commands_chain(workdir):
    n, ev, res = workdir / "norm", workdir / "ev", workdir / "res"
    assert main(["ingest", "--snapshots", str(workdir / "snapshots"), "--officers",
                 str(workdir / "officers"), "--out", str(n)]) == 0
    assert (n / "companies.csv").exists()
    assert main(["diff", "--normalized", str(n), "--out", str(ev), "--postcode-map",
                 str(workdir / "postcode_areas.csv")]) == 0
    assert (ev / "events.csv").read_text().startswith("company_id,month,event,flag")
    assert main(["resolve", "--officers", str(n), "--gender-tables", str(workdir / "gender"),
                 "--cutoff", "2018-11", "--covid", "2018-12:2019-06", "--out", str(res)]) == 0
    assert (res / "persons.csv").exists()
    ser = workdir / "ser"
    assert main(["series", "--events", str(ev), "--historic", str(workdir / "historic"),
                 "--out", str(ser)]) == 0
    assert (ser / "opened.csv").exists()


def test_fit_forecast_excess(series_csv, tmp_path, capsys):
    model, trace = tmp_path / "m.json", tmp_path / "t.csv"
    assert main(["fit", "--series", str(series_csv), "--train", "2011-01:2020-01", "--budget", "20",
                 "--model", str(model), "--trace", str(trace), "--seed", "1"]) == 0
    dump = json.loads(model.read_text())
    assert "spec" in dump or "order" in dump
    assert trace.read_text().count("\n") >= 2
    fc = tmp_path / "fc.csv"
    assert main(["forecast", "--series", str(series_csv), "--model", str(model), "--train",
                 "2011-01:2020-01", "--horizon", "6", "--out", str(fc)]) == 0
    lines = [ln for ln in fc.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 7 and "lower_95" in lines[0]
    out, q = tmp_path / "ex.csv", tmp_path / "q.csv"
    assert main(["excess", "--series", str(series_csv), "--model", str(model), "--eval",
                 "2020-03:2020-06", "--out", str(out), "--quarterly", str(q)]) == 0
    assert "# convention: actual_minus_forecast" in out.read_text()
    assert q.read_text().startswith("quarter")


def test_excess_short_series_exit_2(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("month,value\n" + "".join(f"2019-{m:02d},{m}\n" for m in range(1, 13)))
    code = main(["excess", "--series", str(p), "--out", str(tmp_path / "o.csv")])
    assert code in (2, 3)


def test_breaks_command(series_csv, tmp_path):
    out = tmp_path / "b.csv"
    assert main(["breaks", "--series-dir", str(series_csv.parent), "--out", str(out),
                 "--train", "2011-01:2020-01"]) == 0
    header = out.read_text().splitlines()[0]
    assert header.startswith("series")


def test_run_and_report(workdir, tmp_path):
    conf = workdir / "pipeline.conf"
    text = conf.read_text()
    for k, v in (("train", "2011-01:2018-10"), ("eval", "2018-12:2019-06"),
                 ("pre_covid", "2018-08:2018-11"), ("during_covid", "2018-12:2019-06"),
                 ("cutoff", "2018-11"), ("budget", "15")):
        text = "\n".join(f"{k} = {v}" if ln.startswith(f"{k} =") else ln for ln in text.splitlines())
    conf.write_text(text + "\nchow_candidate = 2018-12\n")
    assert main(["run", "--config", str(conf)]) == 0
    manifest = json.loads((workdir / "out" / "manifest.json").read_text())
    assert [e["status"] for e in manifest["stages"]] == ["ok"] * 8
    assert main(["run", "--config", str(conf)]) == 0
    manifest = json.loads((workdir / "out" / "manifest.json").read_text())
    assert {e["status"] for e in manifest["stages"]} == {"cached"}
    rep = tmp_path / "rep"
    assert main(["report", "--workdir", str(workdir / "out"), "--out", str(rep), "--pre-covid",
                 "2018-08:2018-11", "--covid", "2018-12:2019-06", "--cutoff", "2018-11"]) == 0
    assert (rep / "sector_table.csv").exists()


def test_run_stage_failure_exit_3(workdir, monkeypatch):
    from firmshock import pipeline

    monkeypatch.setattr(pipeline, "stage_resolve", lambda *a: (_ for _ in ()).throw(RuntimeError("x")))
    assert main(["run", "--config", str(workdir / "pipeline.conf"), "--out", str(workdir / "o3")]) == 3


def test_fixture_command_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["fixture", "--out", str(d), "--months", "3", "--firms", "50", "--officers", "60"]) == 0
    fa = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert fa == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert all((a / p).read_bytes() == (b / p).read_bytes() for p in fa)

