"""Command-line front end.

Exit codes: 0 success, 2 bad input, 3 unstable scenario, 4 a statistical
check failed, 5 I/O error. Standard output carries only the result table.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import bounds
from .bounds import (
    BoundReport,
    SweepTemplate,
    TandemScenario,
    UnstableError,
    backlog_bound,
    delay_bound,
    exact_mm1_report,
    mgf_tandem_bound,
)
from .martingale import PROCESSES, check_demisubmartingale, check_doob
from .scenario_file import ScenarioError, load_scenario
from .simulate import SimConfig, simulate_tandem, trace_rows

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNSTABLE = 3
EXIT_CHECK_FAILED = 4
EXIT_IO = 5

REPORT_COLUMNS = ["method", "bound", "theta_star", "valid", "clipped"]


def fmt(value: Any) -> str:
    """17 significant digits for floats, so that every value parses back exactly."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return f"{value:.16e}" if math.isfinite(value) else str(value)
    if value is None:
        return ""
    return str(value)


def write_table(rows: list[dict[str, Any]], columns: list[str], out, fmt_name: str = "csv") -> None:
    if fmt_name == "json":
        json.dump(rows, out, indent=1)
        out.write("\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])


def _report_row(report: BoundReport) -> dict[str, Any]:
    return {
        "method": report.method.value,
        "bound": report.value,
        "theta_star": report.theta_star,
        "valid": report.valid,
        "clipped": report.clipped,
    }


def cmd_bound(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario).scenario
    at = args.at
    if at < 0:
        raise ScenarioError("--at must be non-negative")
    if args.metric == "backlog":
        reports = [backlog_bound(scenario, at)]
    else:
        reports = [delay_bound(scenario, at)]
        if scenario.mm1_parameters() is not None:
            reports.append(exact_mm1_report(scenario, at))
        if scenario.homogeneous:
            reports.append(mgf_tandem_bound(scenario, at))
    rows = [{"at": at, **_report_row(r)} for r in reports]
    write_table(rows, ["at", *REPORT_COLUMNS], sys.stdout, args.format)
    return EXIT_OK


def figure2_rows(rho: float, mud: float, hmax: int) -> list[dict[str, Any]]:
    """End-to-end delay violation probability against path length, mu = 1."""
    if not 0 < rho < 1:
        raise ScenarioError(f"--rho must lie in (0, 1), got {rho}")
    if not mud > 0:
        raise ScenarioError(f"--mud must be positive, got {mud}")
    if hmax < 1:
        raise ScenarioError(f"--hmax must be at least 1, got {hmax}")
    template = SweepTemplate(TandemScenario.mm1(1.0, rho, 1), d=mud)
    table = bounds.sweep(template, "H", range(1, hmax + 1), ["exact", "demi", "mgf"])
    rows: dict[int, dict[str, Any]] = {}
    for cell in table:
        if cell.error is not None:
            raise ScenarioError(cell.error)
        rows.setdefault(int(cell.value), {"H": int(cell.value)})[cell.method] = cell.report.value
    return list(rows.values())


def cmd_figure2(args: argparse.Namespace) -> int:
    rows = figure2_rows(args.rho, args.mud, args.hmax)
    write_table(rows, ["H", "exact", "demi", "mgf"], sys.stdout, args.format)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario).scenario
    template = SweepTemplate(scenario, d=args.d, x=args.x)
    rows = []
    for cell in bounds.sweep(template, args.vary, args.values, args.methods):
        value = int(cell.value) if args.vary == "H" else cell.value
        row: dict[str, Any] = {args.vary: value, "method": cell.method, "error": cell.error}
        if cell.report is not None:
            row.update(_report_row(cell.report))
        rows.append(row)
    write_table(rows, [args.vary, *REPORT_COLUMNS, "error"], sys.stdout, args.format)
    return EXIT_OK


def _sim_config(args: argparse.Namespace) -> SimConfig:
    sf = load_scenario(args.scenario)
    sim = dict(sf.sim)
    for key in ("horizon", "replications", "warmup"):
        if getattr(args, key) is not None:
            sim[key] = getattr(args, key)
    if args.seed is not None:
        sim["seed"] = args.seed
    try:
        return SimConfig(sf.scenario, workers=args.workers, **sim)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def _write_ccdf(path: Path, ccdf, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        write_table(
            [
                {
                    "threshold": p.threshold,
                    "estimate": p.estimate,
                    "half_width_95": p.half_width_95,
                    "n_samples": p.n_samples,
                    "bound": r.bound,
                    "pass": r.passed,
                }
                for p, r in zip(ccdf.points, rows)
            ],
            ["threshold", "estimate", "half_width_95", "n_samples", "bound", "pass"],
            fh,
        )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _sim_config(args)
    result = simulate_tandem(config)
    delay_rows = result.delay_containment()
    backlog_rows = result.backlog_containment()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_ccdf(out / "delay_ccdf.csv", result.delay, delay_rows)
    _write_ccdf(out / "backlog_ccdf.csv", result.backlog, backlog_rows)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            hops = config.scenario.hops
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", *(f"backlog_{h + 1}" for h in range(hops)), "arrivals", "departures"])
            for row in trace_rows(config):
                writer.writerow([row[0], *(fmt(v) for v in row[1:])])
    verdicts = [
        {"metric": "delay", "pass": all(r.passed for r in delay_rows)},
        {"metric": "backlog", "pass": all(r.passed for r in backlog_rows)},
    ]
    verdicts.append({"metric": "containment", "pass": verdicts[0]["pass"] and verdicts[1]["pass"]})
    if not args.quiet:
        write_table(
            [{"metric": v["metric"], "verdict": "PASS" if v["pass"] else "FAIL"} for v in verdicts],
            ["metric", "verdict"],
            sys.stdout,
            args.format,
        )
    return EXIT_OK if verdicts[-1]["pass"] else EXIT_CHECK_FAILED


def cmd_verify(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario).scenario
    ts = scenario.theta_star().value
    theta = ts if args.theta is None else args.theta
    if not 0 < theta <= ts:
        raise ScenarioError(f"--theta must lie in (0, theta*={ts!r}], got {theta}")
    seed = 0 if args.seed is None else args.seed
    rows: list[dict[str, Any]] = []
    ok = True
    for proc in PROCESSES:
        rep = check_demisubmartingale(
            proc, scenario, theta, horizon=args.horizon, replications=args.replications, seed=seed
        )
        ok &= rep.passed
        for e in rep.estimates:
            rows.append(
                {
                    "check": "demisubmartingale",
                    "process": proc,
                    "function": e.function,
                    "lag": e.lag,
                    "estimate": e.estimate,
                    "stderr": e.stderr,
                    "threshold": -3.0 * e.stderr,
                    "pass": e.passed,
                }
            )
    for proc in PROCESSES:
        rep = check_doob(
            proc, scenario, theta, sigmas=args.sigmas, horizon=args.horizon, replications=args.replications, seed=seed
        )
        ok &= rep.passed
        for r in rep.rows:
            rows.append(
                {
                    "check": "doob",
                    "process": proc,
                    "sigma": r.sigma,
                    "estimate": r.estimate,
                    "stderr": r.stderr,
                    "threshold": r.rhs,
                    "pass": r.passed,
                }
            )
    if not args.quiet:
        columns = ["check", "process", "function", "lag", "sigma", "estimate", "stderr", "threshold", "pass"]
        write_table(rows, columns, sys.stdout, args.format)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tandembound", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="overrides the scenario file's sim.seed")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="delay or backlog violation bounds for a scenario file")
    b.add_argument("scenario")
    b.add_argument("--metric", choices=("delay", "backlog"), default="delay")
    b.add_argument("--at", type=float, required=True, help="delay d (slots) or backlog x (work units)")
    b.set_defaults(func=cmd_bound)

    f = sub.add_parser("figure2", help="exact / demisubmartingale / MGF delay tail against H")
    f.add_argument("--rho", type=float, default=0.7)
    f.add_argument("--mud", type=float, default=112.5)
    f.add_argument("--hmax", type=int, default=20)
    f.set_defaults(func=cmd_figure2)

    s = sub.add_parser("simulate", help="Monte-Carlo CCDFs and bound containment")
    s.add_argument("scenario")
    s.add_argument("--out", required=True, help="directory for delay_ccdf.csv and backlog_ccdf.csv")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--horizon", type=int)
    s.add_argument("--replications", type=int)
    s.add_argument("--warmup", type=int)
    s.add_argument("--trace", help="write the per-slot trace of replication 0 here")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="demisubmartingale and maximal-inequality checks")
    v.add_argument("scenario")
    v.add_argument("--theta", type=float, help="defaults to theta*")
    v.add_argument("--horizon", type=int, default=50)
    v.add_argument("--replications", type=int, default=100_000)
    v.add_argument("--sigmas", type=float, nargs="+", default=[2.0, 5.0, 10.0])
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="bounds over a range of one parameter")
    w.add_argument("scenario")
    w.add_argument("--vary", choices=bounds.SWEEP_VARIABLES, required=True)
    w.add_argument("--values", type=float, nargs="*", default=[])
    w.add_argument("--methods", nargs="+", choices=bounds.SWEEP_METHODS, default=["demi", "exact", "mgf"])
    w.add_argument("--d", type=float, default=0.0)
    w.add_argument("--x", type=float, default=0.0)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UnstableError as exc:
        print(f"error: unstable scenario: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
