"""SAR smart contracts: drone object, rescue team, hospital."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .kernel import SimError
from .ledger import WorldState, canonical_json

CONTRACT_DRONE = "drone-object"
CONTRACT_TEAM = "rescue-team"
CONTRACT_HOSPITAL = "hospital"

TEAMS_INDEX = "teams/index"
HOSPITALS_INDEX = "hospitals/index"
WAITING_VICTIMS = "victims/waiting"

URGENCY_NORMAL = "normal"
URGENCY_URGENT = "urgent"

# Drone records keep the most recent image-history window; four default-size
# update payloads give the ~16 MB query response class.
HISTORY_WINDOW = 4


class ContractError(SimError):
    pass


class UnknownDroneError(ContractError):
    pass


class UnknownFunctionError(ContractError):
    pass


class TxView:
    """Read/write-set recording view over a peer's committed state.

    Reads observe committed values only (writes are buffered, Fabric-style),
    and every read records the version it saw so validation can detect
    conflicts. Contract code must read each key it writes: that is what makes
    duplicate submissions collapse to a single valid effect under MVCC.
    """

    def __init__(self, state: WorldState):
        self._state = state
        self.read_set: list[tuple[str, tuple[int, int] | None]] = []
        self._read_keys: set[str] = set()
        self.write_buffer: dict[str, bytes] = {}

    def get(self, key: str):
        if key not in self._read_keys:
            self._read_keys.add(key)
            self.read_set.append((key, self._state.version(key)))
        raw = self._state.get_value(key)
        return None if raw is None else json.loads(raw)

    def put(self, key: str, value: dict) -> None:
        if key not in self._read_keys:
            # enforce read-before-write so MVCC covers every written key
            self.get(key)
        self.write_buffer[key] = canonical_json(value)

    def write_set(self) -> tuple:
        return tuple(sorted(self.write_buffer.items()))


def _distance(a, b) -> float:
    return math.dist((a[0], a[1]), (b[0], b[1]))


# -- drone object -------------------------------------------------------------

def register_drone(view: TxView, args: dict) -> dict:
    key = f"drone/{args['drone_id']}"
    view.put(key, {
        "drone_id": args["drone_id"],
        "location": list(args.get("location", (0.0, 0.0))),
        "battery_fraction": 1.0,
        "cluster_links": args.get("cluster_links", []),
        "history": [],
    })
    return {"registered": args["drone_id"]}


def update_drone_info(view: TxView, args: dict) -> dict:
    key = f"drone/{args['drone_id']}"
    record = view.get(key)
    if record is None:
        raise UnknownDroneError(args["drone_id"])
    record["location"] = list(args["location"])
    record["battery_fraction"] = args["battery_fraction"]
    if "cluster_links" in args:
        record["cluster_links"] = args["cluster_links"]
    history = record.get("history", [])
    history.append({"digest": args["payload_digest"], "size": args["payload_size"]})
    record["history"] = history[-HISTORY_WINDOW:]
    view.put(key, record)
    return {"updated": args["drone_id"], "history_len": len(record["history"])}


def get_drone(view: TxView, args: dict) -> dict:
    record = view.get(f"drone/{args['drone_id']}")
    if record is None:
        raise UnknownDroneError(args["drone_id"])
    return record


def _select_team(view: TxView, location, required_specialists) -> str | None:
    index = view.get(TEAMS_INDEX) or {"ids": []}
    best = None
    for team_id in index["ids"]:
        team = view.get(f"team/{team_id}")
        if team is None or not team["available"]:
            continue
        if not set(required_specialists) <= set(team["specialists"]):
            continue
        key = (_distance(location, team["location"]), team_id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def _select_hospital(view: TxView, location, required_support) -> str | None:
    index = view.get(HOSPITALS_INDEX) or {"ids": []}
    best = None
    for hospital_id in index["ids"]:
        hospital = view.get(f"hospital/{hospital_id}")
        if hospital is None:
            continue
        if not set(required_support) <= set(hospital["capabilities"]):
            continue
        key = (_distance(location, hospital["location"]), hospital_id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def report_victim(view: TxView, args: dict) -> dict:
    """Record a victim and chain into team and hospital selection.

    One invoke covers the whole urgent-information flow: the victim record,
    the nearest feasible team assignment (team marked busy), and, for urgent
    cases, the nearest hospital holding the required support set.
    """
    victim_id = args["victim_id"]
    key = f"victim/{victim_id}"
    existing = view.get(key)
    if existing is not None:
        return {"victim_id": victim_id, "duplicate": True,
                "team": existing.get("team"), "hospital": existing.get("hospital")}
    location = args["location"]
    urgency = args.get("urgency", URGENCY_URGENT)
    required_specialists = args.get("required_specialists", [])
    team_id = _select_team(view, location, required_specialists)
    hospital_id = None
    no_hospital_match = False
    if urgency == URGENCY_URGENT:
        hospital_id = _select_hospital(view, location, args.get("required_support", []))
        no_hospital_match = hospital_id is None
    record = {
        "victim_id": victim_id,
        "location": list(location),
        "urgency": urgency,
        "required_specialists": list(required_specialists),
        "reported_at_us": args["reported_at_us"],
        "reporter": args.get("reporter"),
        "team": team_id,
        "hospital": hospital_id,
        "status": "assigned" if team_id else "waiting",
    }
    view.put(key, record)
    if team_id is not None:
        team = view.get(f"team/{team_id}")
        team["available"] = False
        team["assigned_victim"] = victim_id
        view.put(f"team/{team_id}", team)
    else:
        waiting = view.get(WAITING_VICTIMS) or {"ids": []}
        waiting["ids"].append(victim_id)
        view.put(WAITING_VICTIMS, waiting)
    return {"victim_id": victim_id, "duplicate": False, "team": team_id,
            "hospital": hospital_id, "no_hospital_match": no_hospital_match}


# -- rescue team --------------------------------------------------------------

def register_team(view: TxView, args: dict) -> dict:
    index = view.get(TEAMS_INDEX) or {"ids": []}
    team_id = args["team_id"]
    if team_id not in index["ids"]:
        index["ids"].append(team_id)
        index["ids"].sort()
    view.put(TEAMS_INDEX, index)
    view.put(f"team/{team_id}", {
        "team_id": team_id,
        "location": list(args["location"]),
        "specialists": sorted(args.get("specialists", [])),
        "available": True,
        "assigned_victim": None,
        "archive": [],
    })
    return {"registered": team_id}


def release_team(view: TxView, args: dict) -> dict:
    """Free a team; hand it the highest-priority waiting victim, if any.

    Waiting cases rank by (urgency desc, report time asc, victim id).
    """
    team_id = args["team_id"]
    team = view.get(f"team/{team_id}")
    if team is None:
        raise ContractError(f"unknown team {team_id}")
    closed = team.get("assigned_victim")
    if closed:
        team["archive"] = team.get("archive", []) + [closed]
        victim = view.get(f"victim/{closed}")
        if victim is not None:
            victim["status"] = "closed"
            view.put(f"victim/{closed}", victim)
    team["available"] = True
    team["assigned_victim"] = None
    waiting = view.get(WAITING_VICTIMS) or {"ids": []}
    chosen = None
    if waiting["ids"]:
        ranked = []
        for victim_id in waiting["ids"]:
            victim = view.get(f"victim/{victim_id}")
            if victim is None:
                continue
            if not set(victim.get("required_specialists", [])) <= set(team["specialists"]):
                continue
            urgency_rank = 0 if victim["urgency"] == URGENCY_URGENT else 1
            ranked.append(((urgency_rank, victim["reported_at_us"], victim_id), victim))
        if ranked:
            ranked.sort()
            chosen = ranked[0][1]
    if chosen is not None:
        victim_id = chosen["victim_id"]
        waiting["ids"].remove(victim_id)
        view.put(WAITING_VICTIMS, waiting)
        chosen["team"] = team_id
        chosen["status"] = "assigned"
        view.put(f"victim/{victim_id}", chosen)
        team["available"] = False
        team["assigned_victim"] = victim_id
    view.put(f"team/{team_id}", team)
    return {"team_id": team_id, "assigned_victim": team["assigned_victim"]}


def get_team(view: TxView, args: dict) -> dict:
    team = view.get(f"team/{args['team_id']}")
    if team is None:
        raise ContractError(f"unknown team {args['team_id']}")
    return team


# -- hospital -----------------------------------------------------------------

def register_hospital(view: TxView, args: dict) -> dict:
    if not args.get("capabilities"):
        raise ContractError("hospital capability set must be non-empty")
    index = view.get(HOSPITALS_INDEX) or {"ids": []}
    hospital_id = args["hospital_id"]
    if hospital_id not in index["ids"]:
        index["ids"].append(hospital_id)
        index["ids"].sort()
    view.put(HOSPITALS_INDEX, index)
    view.put(f"hospital/{hospital_id}", {
        "hospital_id": hospital_id,
        "location": list(args["location"]),
        "capabilities": sorted(args["capabilities"]),
    })
    return {"registered": hospital_id}


def get_hospital(view: TxView, args: dict) -> dict:
    hospital = view.get(f"hospital/{args['hospital_id']}")
    if hospital is None:
        raise ContractError(f"unknown hospital {args['hospital_id']}")
    return hospital


INVOKE_FUNCTIONS = {
    (CONTRACT_DRONE, "register_drone"): register_drone,
    (CONTRACT_DRONE, "update_drone_info"): update_drone_info,
    (CONTRACT_DRONE, "report_victim"): report_victim,
    (CONTRACT_TEAM, "register_team"): register_team,
    (CONTRACT_TEAM, "release_team"): release_team,
    (CONTRACT_HOSPITAL, "register_hospital"): register_hospital,
}

QUERY_FUNCTIONS = {
    (CONTRACT_DRONE, "get_drone"): get_drone,
    (CONTRACT_TEAM, "get_team"): get_team,
    (CONTRACT_HOSPITAL, "get_hospital"): get_hospital,
}


@dataclass
class Execution:
    result: dict
    read_set: tuple
    write_set: tuple


def execute_invoke(state: WorldState, contract: str, function: str, args: dict) -> Execution:
    fn = INVOKE_FUNCTIONS.get((contract, function))
    if fn is None:
        raise UnknownFunctionError(f"{contract}.{function}")
    view = TxView(state)
    result = fn(view, args)
    return Execution(result, tuple(view.read_set), view.write_set())


def execute_query(state: WorldState, contract: str, function: str, args: dict) -> dict:
    fn = QUERY_FUNCTIONS.get((contract, function))
    if fn is None:
        raise UnknownFunctionError(f"{contract}.{function}")
    return fn(TxView(state), args)


def query_response_size(contract: str, function: str, result: dict) -> int:
    """Transport size of a query reply; drone queries ship the image window."""
    base = len(canonical_json(result))
    if contract == CONTRACT_DRONE and function == "get_drone":
        base += sum(item["size"] for item in result.get("history", []))
    return base
