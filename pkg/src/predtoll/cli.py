"""Command line: run scenarios, compare reports, validate configs, brute-force toll grids.

Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .closed_loop import (
    MAX_GRID_EVALUATIONS,
    IntervalMismatch,
    PerformanceReport,
    ReportTable,
    ScenarioInputs,
    compare_tables,
    compute_static_tolls,
    dtop_instance,
    grid_oracle,
    run_scenario,
)
from .config import ConfigError, load_config, parse_clock
from .network import validate

log = logging.getLogger("predtoll")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _level_tag(level: float) -> str:
    return f"{level:g}"


def _parse_window(text: str) -> tuple[float, float]:
    try:
        a, b = text.split("-")
        lo, hi = parse_clock(a), parse_clock(b)
    except (ValueError, ConfigError):
        raise UsageError(f"bad window {text!r}; expected HH:MM-HH:MM") from None
    if not lo < hi:
        raise UsageError(f"empty window {text!r}")
    return lo, hi


def _comparison_row(label_t, label_b, table_b: ReportTable, table_t: ReportTable, peak) -> list:
    row = [label_t, label_b]
    for window in (table_b.tolling, peak):
        if window is None:
            row += ["", "", "", ""]
            continue
        c = compare_tables(table_b, table_t, window)
        if c.test is None:
            row += [repr(c.improvement), "", "", ""]
        else:
            row += [repr(c.improvement), repr(c.test.statistic), repr(c.test.p_value), int(c.test.significant)]
    return row


_TABLE_HEADER = [
    "treatment", "baseline",
    "tolling_improvement_pct", "tolling_t", "tolling_p", "tolling_significant",
    "peak_improvement_pct", "peak_t", "peak_p", "peak_significant",
]


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    jobs = args.jobs or cfg.jobs
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = ScenarioInputs.from_config(cfg)
    problems = validate(inputs.network)
    if problems:
        raise ConfigError("invalid network: " + "; ".join(problems))
    static = None
    if "static" in cfg.scenarios:
        static, res = compute_static_tolls(cfg, inputs)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gantry", "toll"])
        for link, value in zip(inputs.network.tolled_links, static):
            w.writerow([link, repr(float(value))])
        (out / "static_tolls.csv").write_text(buf.getvalue())
        log.info("static tolls %s (objective %.1f)", static, res.best_objective)
    timing = []
    failed = []
    table = io.StringIO()
    tw = csv.writer(table, lineterminator="\n")
    tw.writerow(["demand_level"] + _TABLE_HEADER)
    for level in cfg.demand_levels:
        tables = {}
        for scenario in cfg.scenarios:
            log.info("running %s at demand level %g", scenario, level)
            rep: PerformanceReport = run_scenario(cfg, scenario, level, inputs, static, jobs)
            tag = f"{scenario}_L{_level_tag(level)}"
            (out / f"report_{tag}.csv").write_text(rep.to_csv())
            detail = out / tag
            detail.mkdir(exist_ok=True)
            for r, repl in enumerate(rep.replications):
                (detail / f"trips_rep{repl.index}.csv").write_text(rep.trips_csv(r))
                (detail / f"cycles_rep{repl.index}.csv").write_text(rep.cycles_csv(r))
                (detail / f"guidance_rep{repl.index}.csv").write_text(rep.guidance_csv(r, inputs.network))
                if repl.error:
                    failed.append(tag)
                    print(f"error: {tag} replication {repl.index} failed: {repl.error}", file=sys.stderr)
            timing.append((tag, rep.timing_csv()))
            tables[scenario] = rep.table()
        pairs = [("predictive", "no_toll"), ("predictive", "static"), ("static", "no_toll")]
        for treat, base in pairs:
            if treat in tables and base in tables:
                tw.writerow([_level_tag(level)]
                            + _comparison_row(treat, base, tables[base], tables[treat], cfg.cycle.peak))
    (out / "table.csv").write_text(table.getvalue())
    # wall-clock numbers live apart so every other file is reproducible byte for byte
    with open(out / "timing.csv", "w") as fh:
        fh.write("run,replication,cycle,wall_clock_s,generations\n")
        for tag, text in timing:
            for line in text.splitlines()[1:]:
                fh.write(f"{tag},{line}\n")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        raise UsageError("compare needs at least two reports")
    tables = []
    for path in args.reports:
        try:
            tables.append(ReportTable.from_csv(Path(path).read_text()))
        except OSError as exc:
            raise UsageError(f"cannot read report {path}: {exc}") from None
        except (KeyError, ValueError) as exc:
            raise UsageError(f"malformed report {path}: {exc}") from None
    peak = _parse_window(args.peak) if args.peak else None
    base = tables[0]
    for t in tables[1:]:
        if t.intervals != base.intervals or t.tolling != base.tolling:
            raise IntervalMismatch("reports cover different intervals or tolling windows")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(_TABLE_HEADER)
    for path, t in zip(args.reports[1:], tables[1:]):
        w.writerow(_comparison_row(path, args.reports[0], base, t, peak))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config, args.set)
    inputs = ScenarioInputs.from_config(cfg)
    problems = validate(inputs.network)
    for p in problems:
        print(f"network: {p}", file=sys.stderr)
    if problems:
        return EXIT_USAGE
    print(
        f"ok: {inputs.network.n_links} links, {inputs.network.n_gantries} gantries, "
        f"{len(inputs.historical.od_pairs)} OD pairs, {cfg.cycle.n_cycles} cycles of {cfg.cycle.delta:g}s"
    )
    return EXIT_OK


def cmd_grid_oracle(args) -> int:
    cfg = load_config(args.config, args.set)
    inputs = ScenarioInputs.from_config(cfg)
    m = inputs.network.n_gantries
    if args.levels < 1:
        raise UsageError("--levels must be >= 1")
    if args.levels ** m > MAX_GRID_EVALUATIONS:
        raise UsageError(f"grid of {args.levels}^{m} points exceeds {MAX_GRID_EVALUATIONS} evaluations")
    t0 = parse_clock(args.t0) if args.t0 is not None else None
    evaluator, constraints = dtop_instance(cfg, inputs, args.demand_level, t0)
    table = grid_oracle(evaluator, constraints, args.levels)
    best = min(range(len(table)), key=lambda k: (table[k][1], k))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"toll_{g}" for g in inputs.network.tolled_links] + ["objective", "argmin"])
    for k, (point, obj) in enumerate(table):
        w.writerow([repr(x) for x in point] + [repr(obj), int(k == best)])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    print(f"argmin: {list(table[best][0])} objective {table[best][1]:.6g}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="predtoll", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--config", required=True, help="scenario YAML file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value (dotted or bare key); repeatable")

    r = sub.add_parser("run", help="run every (scenario, demand level) in the config")
    add_config(r)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--jobs", type=int, default=None, help="concurrent replications")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="improvement of reports 2.. over report 1")
    c.add_argument("--peak", default=None, help="peak window HH:MM-HH:MM (simulation clock)")
    c.add_argument("reports", nargs="+")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="check a config and its input files")
    add_config(v)
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("grid-oracle", help="evaluate every toll on a grid for one optimization instance")
    add_config(g)
    g.add_argument("--levels", type=int, required=True, help="grid points per gantry")
    g.add_argument("--demand-level", type=float, default=1.0)
    g.add_argument("--t0", default=None, help="instance start (default: start of tolling)")
    g.add_argument("--out", default=None, help="write the table here instead of stdout")
    g.set_defaults(func=cmd_grid_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
