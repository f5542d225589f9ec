"""Command-line entry point: ``firmshock <subcommand> ...``.

Exit codes: 0 success, 2 validation error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import breaks as brk
from . import excess as exc
from . import ingest, pipeline
from .months import YearMonth, parse_window
from .sarima import MonthlySeries, SarimaError, fit, forecast
from .selection import SearchBounds, SelectionError, stepwise_search

log = logging.getLogger("firmshock")

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE = pipeline.EXIT_OK, pipeline.EXIT_VALIDATION, pipeline.EXIT_STAGE

# errors that mean "the inputs or arguments are wrong" rather than "a stage broke"
_VALIDATION = (pipeline.ValidationError, ingest.SchemaError, exc.AlignmentError, FileNotFoundError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _window_arg(text):
    try:
        a, b = parse_window(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e
    return str(a), str(b)


def _levels_arg(text):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad levels {text!r}") from e


def _bare_config(out, **kw):
    """A config for single-stage commands; only the fields a stage reads matter."""
    return pipeline.PipelineConfig(snapshots=None, officers=None, output=Path(out), **kw)


def _ensure_dir(p):
    p = Path(p)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _read_series(path, m):
    path = Path(path)
    if not path.is_file():
        raise pipeline.ValidationError(f"series file {path} not found")
    return MonthlySeries.read_csv(path, m=m)


def _spec_from_model(path):
    return pipeline._spec_from_dump(path)


# -- subcommands -----------------------------------------------------------------

def cmd_ingest(a):
    for p in (a.snapshots, a.officers):
        if not Path(p).is_dir():
            raise pipeline.ValidationError(f"{p} is not a directory")
    if not ingest.list_monthly_files(a.snapshots, "companies"):
        raise pipeline.ValidationError(f"no companies_YYYY-MM.csv snapshots in {a.snapshots}")
    cfg = _bare_config(a.out, schema_map=Path(a.schema_map) if a.schema_map else None,
                       date_format=a.date_format)
    cfg.snapshots, cfg.officers = Path(a.snapshots), Path(a.officers)
    pipeline.stage_ingest(cfg, _ensure_dir(a.out))
    return EXIT_OK


def cmd_diff(a):
    norm = Path(a.normalized)
    if not (norm / "companies.csv").is_file():
        raise pipeline.ValidationError(f"{norm} has no companies.csv (run ingest first)")
    strata = tuple(s for s in a.strata.split(",") if s and s != "none")
    cfg = _bare_config(a.out, strata=strata, register_start=a.register_start,
                       postcode_map=Path(a.postcode_map) if a.postcode_map else None)
    pipeline.stage_diff(cfg, _ensure_dir(a.out), norm)
    return EXIT_OK


def cmd_resolve(a):
    src = Path(a.officers)
    if not (src / "officers.csv").is_file():
        raise pipeline.ValidationError(f"{src} has no officers.csv (run ingest first)")
    cfg = _bare_config(a.out or src, fuzzy=a.fuzzy, cutoff=a.cutoff, during_covid=a.covid,
                       gender_tables=Path(a.gender_tables) if a.gender_tables else None,
                       postcode_map=Path(a.postcode_map) if a.postcode_map else None)
    pipeline.stage_resolve(cfg, _ensure_dir(cfg.output), src)
    return EXIT_OK


def cmd_series(a):
    events = Path(a.events)
    if not (events / "series_all.csv").is_file():
        raise pipeline.ValidationError(f"{events} has no series_all.csv (run diff first)")
    cfg = _bare_config(a.out, historic=Path(a.historic) if a.historic else None)
    pipeline.stage_series(cfg, _ensure_dir(a.out), events)
    return EXIT_OK


def _bounds(a):
    return SearchBounds(max_p=a.max_p, max_q=a.max_q, max_P=a.max_P, max_Q=a.max_Q,
                        max_order=a.max_order)


def cmd_fit(a):
    s = _read_series(a.series, a.period)
    if a.train:
        s = s.window(*(YearMonth.parse(x) for x in a.train))
    fitted, trace = stepwise_search(s, m=a.period, bounds=_bounds(a), budget=a.budget)
    if a.trace:
        Path(a.trace).write_text(trace.to_csv())
    if a.model:
        Path(a.model).write_text(fitted.dumps())
    print(f"{fitted.spec}  AICc={fitted.aicc:.4f}  fits={len(trace.visited)}  stop={trace.stop_reason}")
    return EXIT_OK


def cmd_forecast(a):
    s = _read_series(a.series, a.period)
    if a.train:
        s = s.window(*(YearMonth.parse(x) for x in a.train))
    if a.model:
        fitted = fit(s, _spec_from_model(a.model))
    else:
        fitted, _ = stepwise_search(s, m=a.period, bounds=_bounds(a), budget=a.budget)
    fc = forecast(fitted, a.horizon, a.levels)
    cols = ["month", "forecast", "sd"] + [f"{b}_{lv}" for lv in a.levels for b in ("lower", "upper")]
    lines = [",".join(cols)]
    for i in range(fc.horizon):
        row = [str(s.end + i + 1), f"{fc.mean[i]:.10g}", f"{np.sqrt(fc.variance[i]):.10g}"]
        for lv in a.levels:
            lo, hi = fc.bounds[lv]
            row += [f"{lo[i]:.10g}", f"{hi[i]:.10g}"]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_excess(a):
    s = _read_series(a.series, a.period)
    try:
        conf = exc.CounterfactualConfig(
            train=a.train, eval=a.eval, levels=a.levels, convention=a.convention,
            bounds=_bounds(a), budget=a.budget,
            spec=_spec_from_model(a.model) if a.model else None,
        )
    except ValueError as e:
        raise pipeline.ValidationError(str(e)) from e
    report = exc.run_counterfactual(s, conf, stratum=a.stratum or Path(a.series).stem)
    report.to_csv(a.out)
    if a.quarterly:
        exc.write_quarterly(a.quarterly, exc.quarterly_rollup(report), conf.levels)
    total = report.cumulative[-1]
    lo, hi = report.bounds(max(conf.levels), cumulative=True)
    print(f"{report.stratum}: {report.spec}  cumulative excess {total:.1f} "
          f"[{lo[-1]:.1f}, {hi[-1]:.1f}] ({max(conf.levels)}%)")
    return EXIT_OK


def cmd_breaks(a):
    d = Path(a.series_dir)
    files = sorted(d.glob("*.csv")) if d.is_dir() else []
    if not files:
        raise pipeline.ValidationError(f"no series CSV files in {d}")
    series = {p.stem: MonthlySeries.read_csv(p, m=a.period) for p in files}
    results = brk.run_battery(series, chow_candidate=a.chow, max_breaks=a.max_breaks,
                              za_model=a.za_model, seasonal_train=a.train)
    brk.write_battery(a.out, results)
    return EXIT_OK


def cmd_report(a):
    root = Path(a.workdir)
    for stage in ("ingest", "diff", "resolve", "series", "excess"):
        if not (root / stage).is_dir():
            raise pipeline.ValidationError(f"{root / stage} missing (run the {stage} stage first)")
    cfg = _bare_config(root, pre_covid=a.pre_covid, during_covid=a.covid, cutoff=a.cutoff,
                       levels=a.levels, fit_series=tuple(a.fit_series.split(",")))
    pipeline.stage_report(cfg, _ensure_dir(a.out or root / "report"), root)
    return EXIT_OK


def cmd_run(a):
    overrides = {"seed": a.seed, "jobs": a.jobs}
    if a.out:
        overrides["output"] = str(Path(a.out).resolve())
    cfg = pipeline.PipelineConfig.from_file(a.config, {k: v for k, v in overrides.items() if v is not None})
    result = pipeline.run_pipeline(cfg, force=a.force)
    for e in result.manifest:
        extra = f"  {e['error']}" if e.get("error") else ""
        print(f"{e['stage']:<8} {e['status']:<8} {e['duration_s']:7.2f}s{extra}")
    return result.exit_code


def cmd_fixture(a):
    from .synthetic import FixtureSpec, generate

    spec = FixtureSpec(months=a.months, firms=a.firms, officers=a.officers,
                       seed=a.seed if a.seed is not None else FixtureSpec.seed)
    print(generate(a.out, spec))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def _add_search(p, budget=250):
    p.add_argument("--max-order", type=int, default=None, help="cap on p+q+P+Q")
    p.add_argument("--max-p", type=int, default=5)
    p.add_argument("--max-q", type=int, default=5)
    p.add_argument("--max-P", type=int, default=2)
    p.add_argument("--max-Q", type=int, default=2)
    p.add_argument("--budget", type=int, default=budget, help="maximum number of model fits")
    p.add_argument("--period", type=int, default=12, help="seasonal period m")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random draw")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    # global flags live on each subcommand so their defaults cannot shadow one another
    ap = _Parser(prog="firmshock", description="Registry snapshots to excess firm-event estimates.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="parse raw snapshots and officer files")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--officers", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-map")
    p.add_argument("--date-format", default="iso")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("diff", parents=[common], help="classify monthly firm events")
    p.add_argument("--normalized", required=True, help="ingest output directory")
    p.add_argument("--out", required=True)
    p.add_argument("--strata", default="sic,region", help="comma list of sic, region or none")
    p.add_argument("--postcode-map")
    p.add_argument("--register-start")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("resolve", parents=[common], help="link officer records into persons")
    p.add_argument("--officers", required=True, help="ingest output directory")
    p.add_argument("--gender-tables")
    p.add_argument("--postcode-map")
    p.add_argument("--fuzzy", type=int, default=1)
    p.add_argument("--cutoff", default="2020-02")
    p.add_argument("--covid", type=_window_arg, default=("2020-03", "2021-06"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("series", parents=[common], help="build model-ready monthly series")
    p.add_argument("--events", required=True, help="diff output directory")
    p.add_argument("--historic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_series)

    p = sub.add_parser("fit", parents=[common], help="stepwise SARIMA order selection")
    p.add_argument("--series", required=True)
    p.add_argument("--train", type=_window_arg)
    p.add_argument("--trace")
    p.add_argument("--model", help="write the fitted model as JSON")
    _add_search(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", parents=[common], help="forecast with prediction intervals")
    p.add_argument("--series", required=True)
    p.add_argument("--model", help="fit this model JSON instead of searching")
    p.add_argument("--train", type=_window_arg)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--levels", type=_levels_arg, default=(80, 95))
    p.add_argument("--out")
    _add_search(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("excess", parents=[common], help="counterfactual excess over a window")
    p.add_argument("--series", required=True)
    p.add_argument("--train", type=_window_arg, default=("2011-01", "2020-01"))
    p.add_argument("--eval", type=_window_arg, default=("2020-03", "2021-06"))
    p.add_argument("--out", required=True)
    p.add_argument("--quarterly")
    p.add_argument("--levels", type=_levels_arg, default=(80, 95))
    p.add_argument("--convention", choices=exc.CONVENTIONS, default=exc.ACTUAL_MINUS_FORECAST)
    p.add_argument("--model")
    p.add_argument("--stratum")
    _add_search(p)
    p.set_defaults(func=cmd_excess)

    p = sub.add_parser("breaks", parents=[common], help="structural-break battery")
    p.add_argument("--series-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chow", default="2020-03", help="Chow candidate month")
    p.add_argument("--max-breaks", type=int, default=2)
    p.add_argument("--za-model", choices=("intercept", "trend", "both"), default="intercept")
    p.add_argument("--train", type=_window_arg, help="window for seasonal means")
    p.add_argument("--period", type=int, default=12)
    p.set_defaults(func=cmd_breaks)

    p = sub.add_parser("report", parents=[common], help="sector, elite and plot-data tables")
    p.add_argument("--workdir", required=True, help="pipeline output root")
    p.add_argument("--out")
    p.add_argument("--pre-covid", type=_window_arg, default=("2019-08", "2020-02"))
    p.add_argument("--covid", type=_window_arg, default=("2020-03", "2021-06"))
    p.add_argument("--cutoff", default="2020-02")
    p.add_argument("--levels", type=_levels_arg, default=(80, 95))
    p.add_argument("--fit-series", default="opened,closed,net_change")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", parents=[common], help="whole pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the configured output directory")
    p.add_argument("--force", action="store_true", help="ignore cached stages")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fixture", parents=[common], help="write the synthetic test fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--months", type=int, default=36)
    p.add_argument("--firms", type=int, default=5000)
    p.add_argument("--officers", type=int, default=8000)
    p.set_defaults(func=cmd_fixture)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None:
        np.random.seed(args.seed)
    try:
        return args.func(args)
    except _VALIDATION as e:
        log.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SarimaError, SelectionError, brk.BreakTestError, ValueError, RuntimeError, OSError) as e:
        log.error("%s failed: %s", args.command, e)
        print(f"error: {args.command} failed: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
