"""Command-line surface: simulate, verify-chain, report, sweep."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .kernel import SimError
from .ledger import load_and_verify
from .reporting import report_tables
from .runner import run_scenario
from .scenario import builtin_scenario_names, resolve_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVARIANT = 2


def _summary_line(report: dict) -> dict:
    victims = report["victims"]
    found = sum(1 for v in victims.values() if v["reported_at_s"] is not None)
    blocks = report["ledger"]["blocks_by_peer"]
    return {
        "scenario": report.get("scenario"),
        "seed": report.get("master_seed"),
        "victims_reported": f"{found}/{len(victims)}",
        "blocks": max(blocks.values()) if blocks else 0,
        "coverage": {k: round(v, 4) for k, v in report["coverage_fraction"].items()},
        "violations": report["invariant_violations"],
    }


def cmd_simulate(args) -> int:
    scenario = resolve_scenario(args.scenario)
    result = run_scenario(scenario, out_dir=args.out, seed=args.seed,
                          until_s=args.until)
    if args.format == "json":
        json.dump(result.report, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        summary = _summary_line(result.report)
        print(",".join(str(k) for k in summary))
        print(",".join(str(v) for v in summary.values()))
    if result.out_paths:
        print(f"artifacts written under {args.out}", file=sys.stderr)
    return EXIT_INVARIANT if result.violations else EXIT_OK


def cmd_verify_chain(args) -> int:
    ledger_path = Path(args.ledger)
    index_path = Path(args.index) if args.index else ledger_path.with_suffix(".index.json")
    if not index_path.is_file():
        index_path = None
    result = load_and_verify(ledger_path, index_path)
    print(result)
    return EXIT_OK if result.ok else EXIT_INVARIANT


def cmd_report(args) -> int:
    report_path = Path(args.input) / "report.json"
    with open(report_path) as fh:
        report = json.load(fh)
    which = [t.strip() for t in args.tables.split(",") if t.strip()]
    for name, table in report_tables(report, which).items():
        print(f"== {name} ==")
        print(table)
        print()
    return EXIT_OK


def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


def cmd_sweep(args) -> int:
    scenario = resolve_scenario(args.scenario)
    seeds = _parse_seed_range(args.seeds)
    any_violation = False
    print("seed,victims_reported,blocks,decisions,violations")
    for seed in seeds:
        out_dir = Path(args.out) / f"seed-{seed}" if args.out else None
        result = run_scenario(scenario, out_dir=out_dir, seed=seed,
                              until_s=args.until)
        report = result.report
        victims = report["victims"]
        found = sum(1 for v in victims.values() if v["reported_at_s"] is not None)
        blocks = report["ledger"]["blocks_by_peer"]
        decisions = sum(report["offload_decisions"].values())
        violations = ";".join(result.violations)
        any_violation = any_violation or bool(result.violations)
        print(f"{seed},{found}/{len(victims)},"
              f"{max(blocks.values()) if blocks else 0},{decisions},{violations}")
    return EXIT_INVARIANT if any_violation else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iodsim",
        description="Deterministic drone search-and-rescue simulator with an "
                    "embedded permissioned ledger.",
        epilog=f"bundled scenarios: {', '.join(builtin_scenario_names())}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario")
    sim.add_argument("--scenario", required=True,
                     help="scenario file path or bundled scenario name")
    sim.add_argument("--seed", type=int, default=None, help="override master_seed")
    sim.add_argument("--until", type=float, default=None,
                     help="mission length override in seconds")
    sim.add_argument("--out", default=None, help="artifact output directory")
    sim.add_argument("--format", choices=("json", "csv"), default="json")
    sim.set_defaults(fn=cmd_simulate)

    verify = sub.add_parser("verify-chain", help="audit an exported ledger")
    verify.add_argument("--ledger", required=True, help="path to ledger.bin")
    verify.add_argument("--index", default=None,
                        help="path to ledger.index.json (default: sibling)")
    verify.set_defaults(fn=cmd_verify_chain)

    rep = sub.add_parser("report", help="render tables from a run's report.json")
    rep.add_argument("--in", dest="input", required=True,
                     help="directory holding report.json")
    rep.add_argument("--tables", default="offload,link,ledger")
    rep.set_defaults(fn=cmd_report)

    sweep = sub.add_parser("sweep", help="run a scenario across a seed range")
    sweep.add_argument("--scenario", required=True)
    sweep.add_argument("--seeds", required=True, help="single seed or A..B inclusive")
    sweep.add_argument("--until", type=float, default=None)
    sweep.add_argument("--out", default=None)
    sweep.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
