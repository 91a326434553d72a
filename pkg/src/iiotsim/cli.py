"""Command-line entry point: validate / run / calibrate / report / hunt /
detect over scenario plans and artifact directories."""

import argparse
import json
import os
import sys

import numpy as np

from . import analytics, attacks, harness, hunt as huntmod, plan as planmod
from .detect import (DEFAULT_SPECS, cross_validate, detection_rates,
                     format_detection_table, format_metrics_table)
from .netsim import read_capture_jsonl


def _load_plan(args) -> dict:
    if args.plan:
        return planmod.load_plan(args.plan)
    plan = planmod.default_plan()
    errors = planmod.validate_plan(plan)
    if errors:
        raise planmod.PlanError(errors)
    return plan


def _fail(message, errors=()):
    json.dump({"error": message, "details": list(errors)}, sys.stderr,
              indent=2)
    sys.stderr.write("\n")
    return 2


def cmd_validate(args) -> int:
    try:
        with open(args.plan) as fh:
            plan = json.load(fh)
    except (OSError, ValueError) as e:
        return _fail(f"cannot read plan: {e}")
    errors = planmod.validate_plan(plan)
    if errors:
        return _fail("plan is invalid", errors)
    if not args.quiet:
        print(f"plan {args.plan} is valid "
              f"({len(plan.get('hosts', []))} hosts, "
              f"{len(plan.get('attacks', []))} attacks)")
    return 0


def cmd_run(args) -> int:
    try:
        plan = _load_plan(args)
    except planmod.PlanError as e:
        return _fail("plan is invalid", e.errors)
    only = args.only.split(",") if args.only else None
    try:
        result = harness.run(plan, args.out, seed=args.seed, only=only)
    except Exception as e:  # structured error contract for the CLI
        return _fail(f"run failed: {type(e).__name__}: {e}")
    if not args.quiet:
        for name in sorted(result.paths):
            print(result.paths[name])
    return 0


def cmd_calibrate(args) -> int:
    try:
        plan = _load_plan(args)
        calibrated = planmod.calibrate(plan)
    except planmod.PlanError as e:
        return _fail("plan is invalid", e.errors)
    except planmod.CalibrationError as e:
        return _fail(f"calibration infeasible: {e}")
    out = args.out_plan or (args.plan or "plan.calibrated.json")
    planmod.save_plan(calibrated, out)
    if not args.quiet:
        print(json.dumps(calibrated["service_times_us"], indent=2))
        print(f"wrote {out}")
    return 0


def cmd_report(args) -> int:
    """Re-derive conn.log, dataset and metrics from an existing capture."""
    try:
        plan = _load_plan(args)
    except planmod.PlanError as e:
        return _fail("plan is invalid", e.errors)
    capture_path = os.path.join(args.out, "capture.jsonl")
    windows_path = os.path.join(args.out, "attack_windows.jsonl")
    if not os.path.exists(capture_path):
        return _fail(f"no capture at {capture_path}")
    frames = read_capture_jsonl(capture_path)
    windows = attacks.read_windows_jsonl(windows_path) if os.path.exists(
        windows_path) else []
    conversations = analytics.build_conversations(frames)
    analytics.write_conn_log(conversations, os.path.join(args.out, "conn.log"))
    rows, counts, dropped = analytics.label_dataset(conversations, windows)
    analytics.write_dataset_csv(rows, os.path.join(args.out, "dataset.csv"))
    plc_host = plan["roles"]["plc"]
    plc_ip = next(h["interfaces"][0][2] for h in plan["hosts"]
                  if h["id"] == plc_host)
    report = {
        "packet_stats": analytics.packet_size_stats(frames),
        "response_times_ms": {},
        "plc_request_rates": analytics.plc_request_rates(
            frames, plc_ip, interval_us=1_000_000),
        "class_counts": counts,
        "dropped_rows": dropped,
    }
    for proto in ("MODBUS", "COAP", "DNS", "HTTP", "API", "SMTP", "MQTT"):
        stats = analytics.response_times(frames, proto)
        if stats.count:
            report["response_times_ms"][proto] = {
                "mean_ms": stats.mean_ms, "count": stats.count,
                "unmatched": stats.unmatched}
    with open(os.path.join(args.out, "metrics_report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if not args.quiet:
        print(json.dumps(counts, indent=2))
    return 0


def cmd_hunt(args) -> int:
    conn_path = os.path.join(args.out, "conn.log")
    capture_path = os.path.join(args.out, "capture.jsonl")
    if not os.path.exists(conn_path):
        return _fail(f"no conn.log at {conn_path}")
    rows = analytics.read_conn_log(conn_path)
    frames = read_capture_jsonl(capture_path) if os.path.exists(
        capture_path) else []
    syslog_events = truth_events = None
    if args.syslog and os.path.exists(args.syslog):
        with open(args.syslog) as fh:
            syslog_events, _ = huntmod.parse_syslog(fh.readlines())
    if args.syslog_truth and os.path.exists(args.syslog_truth):
        with open(args.syslog_truth) as fh:
            truth_events, _ = huntmod.parse_syslog(fh.readlines())
    report = huntmod.hunt_report(rows, frames, args.victim,
                                 args.service_port,
                                 backdoor_ports=[args.backdoor_port],
                                 syslog_events=syslog_events,
                                 truth_events=truth_events,
                                 search_pattern=args.pattern)
    out_path = os.path.join(args.out, "hunt_report.json")
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if not args.quiet:
        print(f"identified attacker: {report['identified_attacker']}")
        print(f"backdoor ports: {report['backdoor_ports']}")
        print(out_path)
    return 0


def cmd_detect(args) -> int:
    dataset_path = os.path.join(args.out, "dataset.csv")
    if not os.path.exists(dataset_path):
        return _fail(f"no dataset at {dataset_path}")
    rows = analytics.read_dataset_csv(dataset_path)
    if not rows:
        return _fail("dataset is empty")
    X = np.array([r.features for r in rows])
    y = np.array([r.label for r in rows])
    results = []
    report = {"folds": args.folds, "seed": args.seed or 0, "models": {}}
    attack_labels = [l for l in sorted(set(y)) if l != "normal"]
    for spec in DEFAULT_SPECS:
        res = cross_validate(spec, X, y, k=args.folds, seed=args.seed or 0)
        results.append(res)
        report["models"][spec.kind] = {
            "metrics": {k: v for k, v in res.metrics.items()
                        if k != "per_class"},
            "per_class": res.metrics["per_class"],
            "detection_rates": detection_rates(res, attack_labels),
            "warnings": res.warnings,
        }
        if not args.quiet:
            print(f"{spec.kind}: accuracy "
                  f"{100 * res.metrics['accuracy']:.1f}%")
    out_path = os.path.join(args.out, "detection_report.json")
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if not args.quiet:
        print()
        print(format_metrics_table(results))
        print()
        print(format_detection_table(results, attack_labels))
        print(out_path)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="iiotsim",
        description="deterministic industrial-IoT security testbed simulator")
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a plan file")
    p.add_argument("--plan", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="simulate a plan and emit artifacts")
    p.add_argument("--plan", help="plan file (defaults to the shipped plan)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--only", help="comma-separated artifact list")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("calibrate",
                       help="solve service times for the latency targets")
    p.add_argument("--plan")
    p.add_argument("--out-plan")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("report",
                       help="re-derive analytics from an existing capture")
    p.add_argument("--plan")
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("hunt", help="run the hunting chain over conn.log")
    p.add_argument("--out", default="out")
    p.add_argument("--victim", default="192.168.10.1")
    p.add_argument("--service-port", type=int, default=443)
    p.add_argument("--backdoor-port", type=int, default=4444)
    p.add_argument("--pattern", default="shell")
    p.add_argument("--syslog")
    p.add_argument("--syslog-truth")
    p.set_defaults(fn=cmd_hunt)

    p = sub.add_parser("detect",
                       help="cross-validate the classifiers on dataset.csv")
    p.add_argument("--out", default="out")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_detect)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
