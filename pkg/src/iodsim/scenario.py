"""Scenario files: schema, loading with strict validation, saving, bundled missions."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .kernel import SimError
from .offload import Objective, PolicyConfig, SpecificRule
from .raft import BatchConfig


class ParseError(SimError):
    pass


class SchemaViolation(SimError):
    pass


@dataclass
class AreaSpec:
    x: float = 0.0
    y: float = 0.0
    width: float = 600.0
    height: float = 600.0


@dataclass
class BoatSpec:
    x: float = 300.0
    y: float = -150.0
    track: list = field(default_factory=list)  # [[t_s, x, y], ...]


@dataclass
class ClusterSpec:
    name: str
    leader_profile: str = "big_drone"
    leader_mode: str = "10W/4core"
    smalls: int = 4
    small_profile: str = "small_drone"
    sub_area: list = field(default_factory=list)  # [x, y, w, h]; empty = whole area


@dataclass
class VictimsSpec:
    count: int = 3
    positions: list = field(default_factory=list)  # [[x, y], ...] overrides count


@dataclass
class LinksSpec:
    frame_jitter: bool = True
    datagram_jitter_ms: float = 0.0
    loss_rate: float = 0.0
    small_range_m: float = 2000.0
    leader_range_m: float = 5000.0
    edge_range_m: float = 10000.0


@dataclass
class PolicySpec:
    objective: str = "lex_energy_latency"
    min_accuracy: float = 0.90
    max_latency_ms: float = 500.0
    rules: list = field(default_factory=lambda: [["on_link_down", "store"]])

    def to_config(self) -> PolicyConfig:
        return PolicyConfig(
            objective=Objective(self.objective),
            min_accuracy=self.min_accuracy,
            max_latency_ms=self.max_latency_ms,
            rules=[SpecificRule(c, a) for c, a in self.rules],
        )


@dataclass
class FaultSpec:
    t_s: float
    a: str
    b: str
    up: bool = False


@dataclass
class LedgerSpec:
    orderers: int = 3
    peers: int = 3
    batch_timeout_ms: int = 2000
    batch_max_messages: int = 10
    batch_max_bytes: int = 99_000_000
    endorsement_threshold: int = 2

    def batch_config(self) -> BatchConfig:
        return BatchConfig(self.batch_timeout_ms, self.batch_max_messages,
                           self.batch_max_bytes)


@dataclass
class GatewaySpec:
    """Extra big drone acting as a pure relay between leaders and the edge."""

    name: str
    x: float
    y: float
    profile: str = "big_drone"


@dataclass
class TeamSpec:
    team_id: str
    x: float
    y: float
    specialists: list = field(default_factory=list)


@dataclass
class HospitalSpec:
    hospital_id: str
    x: float
    y: float
    capabilities: list = field(default_factory=lambda: ["emergency_rooms"])


@dataclass
class FleetSpec:
    capture_period_s: float = 1.0
    frame_size_bytes: int = 2_300_000
    altitude_m: float = 60.0
    fov_deg: float = 60.0
    small_speed_mps: float = 10.0
    big_speed_mps: float = 15.0
    turnaround_s: float = 60.0
    verify_boost: float = 0.10
    verify_cap: float = 0.99
    false_positive_rate: float = 0.02
    update_info_period_s: float = 60.0
    verification_by_leader: bool = True
    end_query: bool = True


@dataclass
class ProfilesSpec:
    """Overrides on top of the built-in hardware tables."""

    small_hover_w: float = 300.0
    accuracies: dict = field(default_factory=dict)  # algorithm name -> [0, 1]


@dataclass
class Scenario:
    name: str = "scenario"
    master_seed: int = 42
    duration_s: float = 600.0
    grace_s: float = 300.0
    area: AreaSpec = field(default_factory=AreaSpec)
    boat: BoatSpec = field(default_factory=BoatSpec)
    clusters: list = field(default_factory=lambda: [ClusterSpec("c0")])
    gateways: list = field(default_factory=list)
    victims: VictimsSpec = field(default_factory=VictimsSpec)
    links: LinksSpec = field(default_factory=LinksSpec)
    policy: PolicySpec = field(default_factory=PolicySpec)
    faults: list = field(default_factory=list)
    ledger: LedgerSpec = field(default_factory=LedgerSpec)
    teams: list = field(default_factory=list)
    hospitals: list = field(default_factory=list)
    fleet: FleetSpec = field(default_factory=FleetSpec)
    profiles: ProfilesSpec = field(default_factory=ProfilesSpec)


_SECTION_TYPES = {
    "area": AreaSpec,
    "boat": BoatSpec,
    "victims": VictimsSpec,
    "links": LinksSpec,
    "policy": PolicySpec,
    "ledger": LedgerSpec,
    "fleet": FleetSpec,
    "profiles": ProfilesSpec,
}

_LIST_SECTION_TYPES = {
    "clusters": ClusterSpec,
    "gateways": GatewaySpec,
    "faults": FaultSpec,
    "teams": TeamSpec,
    "hospitals": HospitalSpec,
}

_TOP_SCALARS = {"name", "master_seed", "duration_s", "grace_s"}


def _build_section(cls, data: dict, path: str):
    allowed = set(cls.__dataclass_fields__)
    for key in data:
        if key not in allowed:
            raise SchemaViolation(f"unknown key {key!r} in [{path}]")
    try:
        return cls(**data)
    except TypeError as exc:
        raise SchemaViolation(f"[{path}]: {exc}") from None


def scenario_from_dict(data: dict) -> Scenario:
    scenario = Scenario()
    for key in data:
        if key not in _TOP_SCALARS and key not in _SECTION_TYPES \
                and key not in _LIST_SECTION_TYPES:
            raise SchemaViolation(f"unknown key {key!r} at top level")
    for key in _TOP_SCALARS:
        if key in data:
            setattr(scenario, key, data[key])
    for key, cls in _SECTION_TYPES.items():
        if key in data:
            if not isinstance(data[key], dict):
                raise SchemaViolation(f"[{key}] must be a table")
            setattr(scenario, key, _build_section(cls, data[key], key))
    for key, cls in _LIST_SECTION_TYPES.items():
        if key in data:
            entries = data[key]
            if not isinstance(entries, list):
                raise SchemaViolation(f"[[{key}]] must be an array of tables")
            setattr(scenario, key,
                    [_build_section(cls, e, key) for e in entries])
    _validate(scenario)
    return scenario


def _validate(s: Scenario) -> None:
    if not s.clusters:
        raise SchemaViolation("at least one cluster is required")
    if s.ledger.orderers < 1 or s.ledger.peers < 1:
        raise SchemaViolation("ledger needs at least one orderer and one peer")
    area = (s.area.x, s.area.y, s.area.width, s.area.height)
    for cluster in s.clusters:
        if cluster.smalls < 1:
            raise SchemaViolation(f"cluster {cluster.name}: smalls must be >= 1")
        if cluster.sub_area:
            x, y, w, h = cluster.sub_area
            if not (area[0] <= x and area[1] <= y
                    and x + w <= area[0] + area[2] + 1e-9
                    and y + h <= area[1] + area[3] + 1e-9):
                raise SchemaViolation(f"cluster {cluster.name}: sub_area outside area")
    PolicySpec.to_config(s.policy)  # raises on bad objective/rule vocabulary


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ParseError(f"scenario file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    scenario = scenario_from_dict(data)
    if "name" not in data:
        scenario.name = path.stem
    return scenario


# -- saving ---------------------------------------------------------------------

def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, dict):
        inner = ", ".join(f'"{k}" = {_toml_value(v)}' for k, v in value.items())
        return "{" + inner + "}"
    raise TypeError(f"cannot emit {type(value).__name__} as TOML")


def _emit_table(lines: list[str], header: str, data: dict) -> None:
    lines.append(header)
    for key, value in data.items():
        lines.append(f"{key} = {_toml_value(value)}")
    lines.append("")


def save_scenario(scenario: Scenario, path) -> None:
    """Emit the scenario as TOML (restricted to the schema's value types)."""
    lines: list[str] = []
    for key in ("name", "master_seed", "duration_s", "grace_s"):
        lines.append(f"{key} = {_toml_value(getattr(scenario, key))}")
    lines.append("")
    for key in _SECTION_TYPES:
        _emit_table(lines, f"[{key}]", asdict(getattr(scenario, key)))
    for key in _LIST_SECTION_TYPES:
        for entry in getattr(scenario, key):
            _emit_table(lines, f"[[{key}]]", asdict(entry))
    Path(path).write_text("\n".join(lines).rstrip() + "\n")


def builtin_scenario_names() -> list[str]:
    root = resources.files("iodsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def builtin_scenario(name: str) -> Scenario:
    root = resources.files("iodsim") / "scenarios"
    candidate = root / f"{name}.toml"
    if not candidate.is_file():
        raise ParseError(f"unknown bundled scenario {name!r}; "
                         f"available: {', '.join(builtin_scenario_names())}")
    data = tomllib.loads(candidate.read_text())
    scenario = scenario_from_dict(data)
    if scenario.name == "scenario":
        scenario.name = name
    return scenario


def resolve_scenario(ref: str) -> Scenario:
    """A path if it exists on disk, otherwise a bundled scenario name."""
    if Path(ref).is_file():
        return load_scenario(ref)
    return builtin_scenario(ref)
