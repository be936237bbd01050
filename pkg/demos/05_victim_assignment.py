#!/usr/bin/env python3
"""The smart-contract trio in action: drone reports, team dispatch, hospital
matching, and the waiting queue when every team is busy."""

from iodsim.contracts import (
    CONTRACT_DRONE,
    CONTRACT_HOSPITAL,
    CONTRACT_TEAM,
    execute_invoke,
    execute_query,
)
from iodsim.txflow import _ScratchState

state = _ScratchState()
tx_index = 0


def invoke(contract, function, args):
    global tx_index
    execution = execute_invoke(state, contract, function, args)
    for key, value in execution.write_set:
        state._map[key] = (value, (0, tx_index))
    tx_index += 1
    return execution.result


print("Seeding teams and hospitals...")
invoke(CONTRACT_TEAM, "register_team",
       {"team_id": "coastguard", "location": [0, 500], "specialists": ["medics"]})
invoke(CONTRACT_TEAM, "register_team",
       {"team_id": "divers", "location": [0, 4000],
        "specialists": ["divers", "medics"]})
invoke(CONTRACT_HOSPITAL, "register_hospital",
       {"hospital_id": "harbor", "location": [0, 2000],
        "capabilities": ["emergency_rooms"]})
invoke(CONTRACT_HOSPITAL, "register_hospital",
       {"hospital_id": "central", "location": [0, 9000],
        "capabilities": ["emergency_rooms", "blood_suppliers"]})

print("\nCase 1: routine sighting near shore")
result = invoke(CONTRACT_DRONE, "report_victim",
                {"victim_id": "case-1", "location": [0, 700], "urgency": "normal",
                 "reported_at_us": 1_000_000, "reporter": "c0-leader"})
print(f"  assigned team={result['team']} hospital={result['hospital']}")

print("\nCase 2: urgent, needs blood supplies")
result = invoke(CONTRACT_DRONE, "report_victim",
                {"victim_id": "case-2", "location": [0, 1500], "urgency": "urgent",
                 "required_support": ["blood_suppliers"],
                 "reported_at_us": 2_000_000, "reporter": "c0-leader"})
print(f"  assigned team={result['team']} hospital={result['hospital']}"
      f"  (harbor is closer but lacks blood supplies)")

print("\nCase 3: both teams busy now")
result = invoke(CONTRACT_DRONE, "report_victim",
                {"victim_id": "case-3", "location": [0, 100], "urgency": "urgent",
                 "reported_at_us": 3_000_000, "reporter": "c1-leader"})
print(f"  team={result['team']} -> waiting queue")

print("\nCoastguard wraps case 1 and is released...")
result = invoke(CONTRACT_TEAM, "release_team", {"team_id": "coastguard"})
print(f"  release picked up: {result['assigned_victim']} (urgent cases first)")

record = execute_query(state, CONTRACT_TEAM, "get_team", {"team_id": "coastguard"})
print(f"  coastguard now: available={record['available']} "
      f"assigned={record['assigned_victim']} archive={record['archive']}")

record = execute_query(state, CONTRACT_TEAM, "get_team", {"team_id": "divers"})
print(f"  divers still hold: {record['assigned_victim']}")
