"""Text tables for the comparisons the simulator is built around."""

from __future__ import annotations

from . import devices
from .network import FRAME_LATENCY_MAX_MS, FRAME_LATENCY_MIN_MS, RadioProfile
from .offload import LinkStatus, Objective, PolicyConfig, decide

REQUEST_CLASS_MB = {"update_info": 4.0, "report_victim": 0.5, "query_drone": 16.0}


def _fmt_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows])


def offload_table(report: dict | None = None) -> str:
    """Local vs offload latency/energy per small-drone algorithm."""
    small = devices.intel_up_profile()
    big = devices.jetson_xavier_nx_profile()
    link = LinkStatus(up=True)
    rows = []
    for algo in (devices.HAAR, devices.HOG, devices.YOLOV3_TINY):
        restricted = devices.DeviceProfile(
            small.board_name, small.idle_power_mw, small.modes, small.default_mode,
            {k: v for k, v in small.entries.items() if k[0] == algo})
        big_restricted = devices.DeviceProfile(
            big.board_name, big.idle_power_mw, big.modes, big.default_mode,
            {k: v for k, v in big.entries.items() if k[0] == devices.YOLOV3_TINY})
        cfg = PolicyConfig(objective=Objective.MINIMIZE_ENERGY, min_accuracy=0.0,
                           max_latency_ms=10_000.0)
        d_energy = decide(restricted, big_restricted, link, cfg)
        cfg_lat = PolicyConfig(objective=Objective.MINIMIZE_LATENCY, min_accuracy=0.0,
                               max_latency_ms=10_000.0)
        d_latency = decide(restricted, big_restricted, link, cfg_lat)
        p = d_energy.predicted
        rows.append([
            algo,
            f"{p.local_latency_ms:.1f}",
            f"{p.local_energy_mj:.0f}",
            f"{p.offload_latency_ms:.1f}",
            f"{p.offload_energy_mj:.0f}",
            d_energy.action,
            d_latency.action,
        ])
    table = _fmt_table(
        ["algorithm", "local ms", "local mJ", "offload ms", "offload mJ",
         "min-energy", "min-latency"], rows)
    if report:
        counts = report.get("offload_decisions", {})
        observed = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
        table += f"\n\nobserved decisions: {observed or 'none'}"
    return table


def link_table(report: dict | None = None) -> str:
    """The measured radio model: datagram line and frame envelope."""
    radio = RadioProfile(range_m=0.0)
    rows = [
        ["UDP datagram", "10000 B", f"{radio.datagram_latency_ms(10_000):.1f} ms"],
        ["UDP datagram", "65508 B", f"{radio.datagram_latency_ms(65_508):.1f} ms"],
        ["UDP datagram", "30000 B", f"{radio.datagram_latency_ms(30_000):.3f} ms"],
        ["video frame", "2300000 B",
         f"{FRAME_LATENCY_MIN_MS:.0f}-{FRAME_LATENCY_MAX_MS:.0f} ms "
         f"(plan {radio.frame_latency.decision_ms:.0f} ms)"],
    ]
    return _fmt_table(["transfer", "size", "one-way latency"], rows)


def ledger_table(report: dict) -> str:
    """Request classes with observed counts and end-to-end latencies."""
    classes = report.get("ledger", {}).get("request_classes", {})
    rows = []
    for name in ("update_info", "report_victim", "query_drone"):
        stats = classes.get(name, {"count": 0, "failures": 0, "mean_latency_s": None})
        mean = stats["mean_latency_s"]
        rows.append([
            name,
            str(stats["count"]),
            str(stats["failures"]),
            f"{mean:.3f}" if mean is not None else "-",
            f"~{REQUEST_CLASS_MB[name]:g}",
        ])
    return _fmt_table(["request class", "count", "failures", "mean latency s",
                       "capacity MB"], rows)


TABLES = {"offload": offload_table, "link": link_table, "ledger": ledger_table}


def report_tables(report: dict, which: list[str] | None = None) -> dict[str, str]:
    names = which or ["offload", "link", "ledger"]
    out = {}
    for name in names:
        if name not in TABLES:
            raise KeyError(f"unknown table {name!r}; choose from {sorted(TABLES)}")
        out[name] = TABLES[name](report)
    return out
