"""Event trace recording and report aggregation.

Every aggregate in the report is computed from the trace rows alone, so a
written trace can be re-parsed and must reproduce the report exactly.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict

TRACE_COLUMNS = [
    "t_us", "kind", "node", "src", "dst", "tag", "size", "transfer",
    "deliver_at_us", "drop", "category", "mj", "frame_id", "algo", "action",
    "rule", "positive", "truth", "stage", "victim_id", "tx_id", "block",
    "tx_index", "flag", "term", "event", "latency_us", "detail",
    "a", "b", "up", "fp_x", "fp_y", "fp_side", "x", "y",
]

_FLOAT_FIELDS = {"mj", "fp_x", "fp_y", "fp_side", "x", "y"}
_INT_FIELDS = {"t_us", "size", "deliver_at_us", "block", "tx_index", "term",
               "latency_us"}
_BOOL_FIELDS = {"positive", "truth", "up"}


class TraceRecorder:
    def __init__(self):
        self.rows: list[dict] = []

    def record(self, row: dict) -> None:
        self.rows.append(row)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for row in self.rows:
                writer.writerow([_cell(row.get(col)) for col in TRACE_COLUMNS])


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bytes):
        return value.hex()
    return str(value)


def read_trace_csv(path) -> list[dict]:
    """Parse a written trace back into typed rows (exact float round trip)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for raw in reader:
            row = {}
            for col, cell in zip(header, raw):
                if cell == "":
                    continue
                if col in _FLOAT_FIELDS:
                    row[col] = float(cell)
                elif col in _INT_FIELDS:
                    row[col] = int(cell)
                elif col in _BOOL_FIELDS:
                    row[col] = cell == "true"
                else:
                    row[col] = cell
            rows.append(row)
    return rows


def union_area(rects: list[tuple[float, float, float, float]]) -> float:
    """Exact union area of axis-aligned rectangles (x0, y0, x1, y1).

    Slabs run along y because capture footprints share row y-coordinates,
    keeping the slab count small.
    """
    rects = [r for r in rects if r[2] > r[0] and r[3] > r[1]]
    if not rects:
        return 0.0
    ys = sorted({r[1] for r in rects} | {r[3] for r in rects})
    total = 0.0
    for i in range(len(ys) - 1):
        y0, y1 = ys[i], ys[i + 1]
        if y1 <= y0:
            continue
        intervals = sorted((r[0], r[2]) for r in rects if r[1] <= y0 and r[3] >= y1)
        if not intervals:
            continue
        covered = 0.0
        cx0, cx1 = intervals[0]
        for x0, x1 in intervals[1:]:
            if x0 > cx1:
                covered += cx1 - cx0
                cx0, cx1 = x0, x1
            else:
                cx1 = max(cx1, x1)
        covered += cx1 - cx0
        total += covered * (y1 - y0)
    return total


def _clip(rect, bounds):
    x0 = max(rect[0], bounds[0])
    y0 = max(rect[1], bounds[1])
    x1 = min(rect[2], bounds[2])
    y1 = min(rect[3], bounds[3])
    return (x0, y0, x1, y1)


def compute_report(rows: list[dict]) -> dict:
    """Aggregate a run's event trace into the metrics report."""
    victims: dict[str, dict] = {}
    clusters: dict[str, dict] = {}
    energy: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
    decisions: dict[str, int] = defaultdict(int)
    rule_hits: dict[str, int] = defaultdict(int)
    detections: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    edge_bytes = {"live": 0, "synced": 0, "relay_frame": 0}
    edge_duplicates = 0
    footprints: dict[str, list] = defaultdict(list)
    tx_stats: dict[str, dict] = defaultdict(lambda: {"count": 0, "latency_us_sum": 0,
                                                     "failures": 0})
    commit_flags_by_peer: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    blocks_by_peer: dict[str, int] = defaultdict(int)
    raft_leaders_by_term: dict[int, set] = defaultdict(set)
    raft_events: dict[str, int] = defaultdict(int)
    drones_lost: list[str] = []
    node_cluster: dict[str, str] = {}
    final_t_us = 0

    for row in rows:
        kind = row.get("kind")
        t_us = row.get("t_us", 0)
        final_t_us = max(final_t_us, t_us)
        if kind == "victim_truth":
            victims[row["victim_id"]] = {"x": row["x"], "y": row["y"],
                                         "discovered_at_us": None,
                                         "reported_at_us": None}
        elif kind == "cluster_def":
            clusters[row["node"]] = {"sub_area": (row["fp_x"], row["fp_y"],
                                                  row["x"], row["y"])}
        elif kind == "node_def":
            node_cluster[row["node"]] = row["detail"]
        elif kind == "victim_discovered":
            v = victims.get(row["victim_id"])
            if v and v["discovered_at_us"] is None:
                v["discovered_at_us"] = t_us
        elif kind == "victim_reported":
            v = victims.get(row["victim_id"])
            if v and v["reported_at_us"] is None:
                v["reported_at_us"] = t_us
        elif kind == "energy":
            energy[row["node"]][row["category"]] += row["mj"]
        elif kind == "frame_decision":
            decisions[row["action"]] += 1
            if row.get("rule"):
                rule_hits[row["rule"]] += 1
            cluster = node_cluster.get(row["node"])
            if cluster is not None:
                half = row["fp_side"] / 2.0
                footprints[cluster].append((row["fp_x"] - half, row["fp_y"] - half,
                                            row["fp_x"] + half, row["fp_y"] + half))
        elif kind == "detection":
            key = f"{row['stage']}:{'pos' if row['positive'] else 'neg'}"
            detections[row["node"]][key] += 1
        elif kind == "edge_receive":
            detail = row.get("detail", "live")
            edge_bytes[detail] = edge_bytes.get(detail, 0) + row.get("size", 0)
        elif kind == "edge_duplicate":
            edge_duplicates += 1
        elif kind in ("report_tx", "update_tx", "query_tx"):
            cls = {"report_tx": "report_victim", "update_tx": "update_info",
                   "query_tx": "query_drone"}[kind]
            stats = tx_stats[cls]
            if row.get("detail") == "ok":
                stats["count"] += 1
                stats["latency_us_sum"] += row.get("latency_us", 0)
            else:
                stats["failures"] += 1
        elif kind == "tx_commit":
            commit_flags_by_peer[row["node"]][row["flag"]] += 1
        elif kind == "block_commit":
            blocks_by_peer[row["node"]] = max(blocks_by_peer[row["node"]], row["block"])
        elif kind == "raft":
            raft_events[row["event"]] += 1
            if row["event"] == "became_leader":
                raft_leaders_by_term[row["term"]].add(row["node"])
        elif kind == "drone_lost":
            drones_lost.append(row["node"])

    victim_report = {}
    for victim_id in sorted(victims):
        v = victims[victim_id]
        victim_report[victim_id] = {
            "x": v["x"], "y": v["y"],
            "discovered_at_s": None if v["discovered_at_us"] is None
            else v["discovered_at_us"] / 1e6,
            "reported_at_s": None if v["reported_at_us"] is None
            else v["reported_at_us"] / 1e6,
        }

    coverage = {}
    for cluster in sorted(clusters):
        x, y, w, h = clusters[cluster]["sub_area"]
        bounds = (x, y, x + w, y + h)
        clipped = [_clip(r, bounds) for r in footprints.get(cluster, [])]
        area = union_area(clipped)
        coverage[cluster] = area / (w * h) if w * h > 0 else 0.0

    request_classes = {}
    for cls in sorted(tx_stats):
        stats = tx_stats[cls]
        mean_s = (stats["latency_us_sum"] / stats["count"] / 1e6
                  if stats["count"] else None)
        request_classes[cls] = {"count": stats["count"], "failures": stats["failures"],
                                "mean_latency_s": mean_s}

    # flags from one reference peer: the tallest chain, lowest id on ties
    flags_one_peer: dict[str, int] = {}
    if blocks_by_peer:
        reference = sorted(blocks_by_peer, key=lambda p: (-blocks_by_peer[p], p))[0]
        flags_one_peer = dict(sorted(commit_flags_by_peer[reference].items()))

    return {
        "final_time_s": final_t_us / 1e6,
        "victims": victim_report,
        "energy_mj": {node: dict(sorted(cats.items()))
                      for node, cats in sorted(energy.items())},
        "offload_decisions": dict(sorted(decisions.items())),
        "specific_rule_hits": dict(sorted(rule_hits.items())),
        "detections": {node: dict(sorted(cats.items()))
                       for node, cats in sorted(detections.items())},
        "edge_bytes": dict(sorted(edge_bytes.items())),
        "edge_duplicate_urgent": edge_duplicates,
        "coverage_fraction": coverage,
        "ledger": {
            "blocks_by_peer": dict(sorted(blocks_by_peer.items())),
            "tx_flags": flags_one_peer,
            "request_classes": request_classes,
        },
        "raft": {
            "events": dict(sorted(raft_events.items())),
            "leaders_by_term": {str(term): sorted(nodes)
                                for term, nodes in sorted(raft_leaders_by_term.items())},
        },
        "drones_lost": sorted(drones_lost),
    }


def election_safety_violations(report: dict) -> list[str]:
    return [term for term, nodes in report["raft"]["leaders_by_term"].items()
            if len(nodes) > 1]


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
