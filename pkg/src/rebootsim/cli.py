"""Command-line front end: run scenarios, compare reports, ingest logs.

Exit codes are a stable contract for scripting: 0 on success, 1 when an
input document fails validation, 2 on runtime errors.  All artifacts land
under the requested output directory; input documents are never touched.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

from .metrics import (
    MetricsReport,
    RequestRecord,
    SchemaMismatchError,
    compare,
    write_buckets_csv,
    write_trace_csv,
)
from .model import load_model
from .scenario import ScenarioError, load_scenario, run_scenario, validate_scenario
from .workload import DEFAULT_ERROR_KEYWORDS, classify_response, load_workload

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rebootsim",
        description="Simulate reboot-based recovery in a componentized web application "
        "and quantify the end-user impact.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and emit trace, report, buckets and figures")
    p_run.add_argument("--scenario", required=True, type=Path, help="scenario JSON document")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--replicates", type=int, default=1, help="run N replicates varying only the seed")
    p_run.add_argument("--out", type=Path, default=None, help="output directory (default: scenario 'out' or ./rebootsim-out)")
    p_run.add_argument("--bucket-ms", type=float, default=None, help="override the metrics bucket size")
    p_run.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p_cmp = sub.add_parser("compare", help="tabulate reports against the first one")
    p_cmp.add_argument("reports", nargs="+", type=Path, help="report.json files; first is the reference")
    p_cmp.add_argument("--out", type=Path, default=None, help="directory for comparison.json and figure")
    p_cmp.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p_ing = sub.add_parser("ingest", help="convert an access log into the canonical trace format")
    p_ing.add_argument("log", type=Path, help="CSV of timestamp_ms,client_id,url_or_operation,http_status,body_flags")
    p_ing.add_argument("--out", type=Path, required=True, help="output directory for trace.csv")
    p_ing.add_argument("--homepage", default=None, help="operation marking session starts (else one session per client)")
    p_ing.add_argument("--keywords", default=",".join(DEFAULT_ERROR_KEYWORDS),
                       help="comma-separated body keywords classified as errors")
    p_ing.add_argument("--max-bad-fraction", type=float, default=0.1,
                       help="abort when more than this fraction of rows is malformed")

    p_val = sub.add_parser("validate", help="validate a scenario and its referenced documents")
    p_val.add_argument("--scenario", required=True, type=Path)
    return parser


def _load_and_validate(path: Path):
    try:
        scenario = load_scenario(path)
    except (OSError, json.JSONDecodeError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None
    problems = validate_scenario(scenario)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return None
    return scenario


def cmd_run(args) -> int:
    scenario = _load_and_validate(args.scenario)
    if scenario is None:
        return EXIT_VALIDATION
    if args.replicates < 1:
        print("invalid: --replicates must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION

    out = args.out or scenario.out_dir or Path("rebootsim-out") / (scenario.name or "run")
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(scenario.model_path)
    workload = load_workload(scenario.workload_path)
    base_seed = scenario.seed if args.seed is None else args.seed

    reports: list[MetricsReport] = []
    for rep_i in range(args.replicates):
        seed = base_seed + rep_i
        rep_dir = out if args.replicates == 1 else out / f"rep-{rep_i:02d}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        records, report = run_scenario(
            scenario, model, workload, seed=seed, bucket_ms=args.bucket_ms
        )
        write_trace_csv(records, rep_dir / "trace.csv")
        report.save(rep_dir / "report.json")
        write_buckets_csv(report, rep_dir / "buckets.csv")
        if not args.no_figures:
            from .figures import render_run_figures

            render_run_figures(report, rep_dir)
        reports.append(report)
        print(
            f"seed {seed}: {report.requests_total} requests, "
            f"{report.failed_requests_total} failed, "
            f"downtime {report.perceived_downtime_s:.1f}s -> {rep_dir}"
        )

    if args.replicates > 1:
        summary = {
            "scenario": scenario.name,
            "replicates": args.replicates,
            "seeds": [base_seed + i for i in range(args.replicates)],
            "metrics": {},
        }
        for name in MetricsReport.SCALARS:
            values = [getattr(r, name) for r in reports]
            summary["metrics"][name] = {
                "mean": statistics.mean(values),
                "stddev": statistics.stdev(values) if len(values) > 1 else 0.0,
            }
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"aggregate over {args.replicates} replicates -> {out / 'report.json'}")
    return EXIT_OK


def _format_pct(value) -> str:
    return "--" if value is None else f"{value:.1f}%"


def cmd_compare(args) -> int:
    if len(args.reports) < 2:
        print("invalid: compare needs at least two reports", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        reports = [MetricsReport.load(p) for p in args.reports]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: cannot read report: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    reference = reports[0]
    rows = []
    try:
        for rep in reports:
            imp = compare(reference, rep)
            rows.append(
                {
                    "technique": rep.label or "run",
                    "failed_requests": rep.failed_requests_total,
                    "downtime_s": rep.perceived_downtime_s,
                    "improvement_requests_pct": None if rep is reference else imp["requests"],
                    "improvement_downtime_pct": None if rep is reference else imp["downtime"],
                }
            )
    except SchemaMismatchError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    width = max(len(r["technique"]) for r in rows) + 2
    header = (
        f"{'technique':<{width}}{'failed':>8}  {'downtime[s]':>11}  "
        f"{'req improv.':>12}  {'down improv.':>12}"
    )
    print(header)
    print("-" * len(header))
    for r in rows:
        print(
            f"{r['technique']:<{width}}{r['failed_requests']:>8}  {r['downtime_s']:>11.1f}  "
            f"{_format_pct(r['improvement_requests_pct']):>12}  "
            f"{_format_pct(r['improvement_downtime_pct']):>12}"
        )

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "comparison.json", "w", encoding="utf-8") as fh:
            json.dump({"reference": reference.label, "rows": rows}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if not args.no_figures:
            from .figures import render_comparison

            render_comparison(reports, args.out / "comparison.png")
    return EXIT_OK


def cmd_ingest(args) -> int:
    keywords = tuple(k.strip() for k in args.keywords.split(",") if k.strip())
    try:
        rows, bad = _read_log(args.log)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    total = len(rows) + bad
    if total == 0:
        print("warning: empty log, writing empty trace", file=sys.stderr)
    elif bad / total > args.max_bad_fraction:
        print(
            f"error: {bad}/{total} malformed rows exceeds --max-bad-fraction {args.max_bad_fraction}",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    elif bad:
        print(f"warning: skipped {bad} malformed rows", file=sys.stderr)

    rows.sort(key=lambda r: (r[1], r[0]))  # per client, by timestamp
    session_seq: dict[str, int] = {}
    client_ids: dict[str, int] = {}
    records: list[RequestRecord] = []
    for ts, client, op, status, body in rows:
        if args.homepage is not None and (op == args.homepage or client not in session_seq):
            session_seq[client] = session_seq.get(client, 0) + 1
        elif client not in session_seq:
            session_seq[client] = 1
        ok = classify_response(
            http_status=status, body=body, network_error=status is None, keywords=keywords
        )
        records.append(
            RequestRecord(
                request_id=len(records),
                client_id=client_ids.setdefault(client, len(client_ids)),
                session_id=f"{client}-{session_seq[client]}",
                operation=op,
                start=ts,
                end=ts,
                outcome="ok" if ok else "failed",
                retries=0,
            )
        )
    args.out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(records, args.out / "trace.csv")
    print(f"{len(records)} rows -> {args.out / 'trace.csv'}")
    return EXIT_OK


def _read_log(path: Path) -> tuple[list[tuple], int]:
    import csv

    rows: list[tuple] = []
    bad = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or (i == 0 and row[0].strip().lower().startswith("timestamp")):
                continue
            try:
                ts = float(row[0])
                client = row[1].strip()
                op = row[2].strip()
                raw_status = row[3].strip() if len(row) > 3 else ""
                status = int(raw_status) if raw_status not in ("", "-", "ERR") else None
                body = row[4] if len(row) > 4 else ""
                if not client or not op:
                    raise ValueError("missing client or operation")
                rows.append((ts, client, op, status, body))
            except (ValueError, IndexError):
                bad += 1
    return rows, bad


def cmd_validate(args) -> int:
    scenario = _load_and_validate(args.scenario)
    if scenario is None:
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "run": cmd_run,
        "compare": cmd_compare,
        "ingest": cmd_ingest,
        "validate": cmd_validate,
    }[args.command]
    try:
        return handler(args)
    except (ScenarioError, SchemaMismatchError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime contract: anything unexpected is exit 2
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
