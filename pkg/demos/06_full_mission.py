#!/usr/bin/env python3
"""Run the bundled baseline mission end to end and read the story out of the
metrics report."""

import sys

from iodsim.reporting import report_tables
from iodsim.runner import run_scenario
from iodsim.scenario import builtin_scenario

name = sys.argv[1] if len(sys.argv) > 1 else "paper-baseline"
scenario = builtin_scenario(name)
print(f"Running {scenario.name}: {len(scenario.clusters)} cluster(s), "
      f"{scenario.duration_s:.0f} s mission + {scenario.grace_s:.0f} s recovery, "
      f"seed {scenario.master_seed}\n")

result = run_scenario(scenario)
report = result.report

print("Victims:")
for victim_id, v in report["victims"].items():
    if v["reported_at_s"] is None:
        print(f"  {victim_id} at ({v['x']:.0f}, {v['y']:.0f}): never reported")
    else:
        print(f"  {victim_id} at ({v['x']:.0f}, {v['y']:.0f}): "
              f"discovered {v['discovered_at_s']:.1f} s, "
              f"reported {v['reported_at_s']:.1f} s")

print(f"\nCoverage: " + ", ".join(f"{c}={f:.1%}"
                                  for c, f in report["coverage_fraction"].items()))
print(f"Offload decisions: {report['offload_decisions']}")
print(f"Edge bytes: live {report['edge_bytes']['live'] / 1e6:.1f} MB, "
      f"synced at the boat {report['edge_bytes']['synced'] / 1e6:.1f} MB")

energy = report["energy_mj"]
print("\nEnergy per drone (MJ):")
for node in sorted(energy):
    if node.startswith("c"):
        cats = energy[node]
        total = sum(cats.values()) / 1e6
        detail = ", ".join(f"{c}={v / 1e6:.3f}" for c, v in sorted(cats.items()))
        print(f"  {node:10} total {total:7.3f}  ({detail})")

ledger = report["ledger"]
print(f"\nLedger: {max(ledger['blocks_by_peer'].values())} blocks, "
      f"flags {ledger['tx_flags']}, "
      f"raft elections {report['raft']['events'].get('became_leader', 0)}")

print()
for table_name, table in report_tables(report).items():
    print(f"== {table_name} ==")
    print(table)
    print()

print(f"invariant violations: {result.violations or 'none'}")
