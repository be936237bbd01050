"""Scenario orchestration: build the world, run to quiescence, export artifacts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import devices
from .contracts import CONTRACT_DRONE, CONTRACT_HOSPITAL, CONTRACT_TEAM
from .fleet import (
    CameraModel,
    EdgeSink,
    FleetConfig,
    LeaderDrone,
    MissionContext,
    SmallDrone,
    Victim,
    sweep_plan,
)
from .kernel import Simulator, s_to_us
from .ledger import (
    IdentityRegistry,
    ROLE_CLIENT,
    ROLE_ORDERER,
    ROLE_PEER,
    export_chain,
    verify_chain,
)
from .metrics import TraceRecorder, compute_report, election_safety_violations, write_report
from .network import LinkKind, NetConfig, Network, RadioProfile
from .raft import OrdererNode
from .scenario import Scenario
from .txflow import ClientNode, PeerNode, build_genesis

EDGE_ID = "edge"
EDGE_CLIENT_ID = "edge-client"
VICTIM_STREAM = "victims"


class _RaftTraceAdapter:
    """Routes RaftCore trace records into the main trace as kind="raft" rows."""

    def __init__(self, recorder: TraceRecorder):
        self.recorder = recorder

    def append(self, rec: dict) -> None:
        row = dict(rec)
        row["kind"] = "raft"
        self.recorder.record(row)


@dataclass
class RunResult:
    scenario: Scenario
    report: dict
    recorder: TraceRecorder
    victims: list[Victim]
    violations: list[str]
    sim: Simulator
    net: Network
    leaders: list[LeaderDrone]
    smalls: list[SmallDrone]
    orderers: list[OrdererNode]
    peers: list[PeerNode]
    edge: EdgeSink
    out_paths: dict = field(default_factory=dict)


def _boat_position_fn(scenario: Scenario, sim: Simulator):
    boat = scenario.boat
    if not boat.track:
        pos = (boat.x, boat.y)
        return lambda: pos
    track = [(s_to_us(t), x, y) for t, x, y in boat.track]
    if track[0][0] > 0:
        track.insert(0, (0, boat.x, boat.y))

    def position():
        now = sim.now
        if now <= track[0][0]:
            return (track[0][1], track[0][2])
        for (t0, x0, y0), (t1, x1, y1) in zip(track, track[1:]):
            if now <= t1:
                frac = (now - t0) / (t1 - t0) if t1 > t0 else 1.0
                return (x0 + (x1 - x0) * frac, y0 + (y1 - y0) * frac)
        return (track[-1][1], track[-1][2])

    return position


def _hardware(scenario: Scenario) -> dict[str, devices.HardwareSpec]:
    specs = devices.default_profiles()
    overrides = scenario.profiles
    if overrides.small_hover_w != specs["small_drone"].hover_power_w:
        specs["small_drone"].hover_power_w = overrides.small_hover_w
    for spec in specs.values():
        board = spec.board
        for key, entry in list(board.entries.items()):
            algo = key[0]
            if algo in overrides.accuracies:
                board.entries[key] = replace(entry, accuracy=overrides.accuracies[algo])
    return specs


class MissionRunner:
    def __init__(self, scenario: Scenario, out_dir=None,
                 until_s: float | None = None):
        self.scenario = scenario
        self.out_dir = Path(out_dir) if out_dir else None
        self.duration_s = until_s if until_s is not None else scenario.duration_s
        self._build()

    # -- construction ---------------------------------------------------------

    def _build(self) -> None:
        scenario = self.scenario
        self.sim = Simulator(scenario.master_seed)
        self.recorder = TraceRecorder()
        self.sim.streams.register(VICTIM_STREAM)

        self._nodes_by_id = {}
        net_config = NetConfig(frame_jitter=scenario.links.frame_jitter,
                               datagram_jitter_ms=scenario.links.datagram_jitter_ms,
                               loss_rate=scenario.links.loss_rate)
        self.net = Network(self.sim, net_config, energy_hook=self._charge_tx,
                           on_event=self.recorder.record)

        specs = _hardware(scenario)
        boat_pos = _boat_position_fn(scenario, self.sim)
        camera = CameraModel(scenario.fleet.altitude_m, scenario.fleet.fov_deg)
        fleet_cfg = FleetConfig(
            capture_period_s=scenario.fleet.capture_period_s,
            frame_size_bytes=scenario.fleet.frame_size_bytes,
            camera=camera,
            small_speed_mps=scenario.fleet.small_speed_mps,
            big_speed_mps=scenario.fleet.big_speed_mps,
            turnaround_s=scenario.fleet.turnaround_s,
            verify_boost=scenario.fleet.verify_boost,
            verify_cap=scenario.fleet.verify_cap,
            false_positive_rate=scenario.fleet.false_positive_rate,
            update_info_period_s=scenario.fleet.update_info_period_s,
            verification_by_leader=scenario.fleet.verification_by_leader,
            policy=scenario.policy.to_config(),
        )

        self.victims = self._place_victims()
        self.ctx = MissionContext(self.sim, self.net, fleet_cfg, self.victims,
                                  EDGE_ID, boat_pos, self.recorder.record)

        radios = {
            "small": RadioProfile(range_m=scenario.links.small_range_m),
            "leader": RadioProfile(range_m=scenario.links.leader_range_m),
            "edge": RadioProfile(range_m=scenario.links.edge_range_m),
        }

        orderer_ids = [f"orderer-{i}" for i in range(scenario.ledger.orderers)]
        peer_ids = [f"peer-{i}" for i in range(scenario.ledger.peers)]
        leader_ids = [f"{c.name}-leader" for c in scenario.clusters]
        gateway_ids = [g.name for g in scenario.gateways]

        self.registry = IdentityRegistry(seed=scenario.master_seed)
        for oid in orderer_ids:
            self.registry.register(oid, ROLE_ORDERER)
        for pid in peer_ids:
            self.registry.register(pid, ROLE_PEER)
        for lid in leader_ids + gateway_ids:
            self.registry.register(lid, ROLE_CLIENT)
        self.registry.register(EDGE_CLIENT_ID, ROLE_CLIENT)
        self.registry.register("genesis", ROLE_CLIENT)

        seed_invokes = []
        for team in scenario.teams:
            seed_invokes.append((CONTRACT_TEAM, "register_team",
                                 {"team_id": team.team_id,
                                  "location": [team.x, team.y],
                                  "specialists": sorted(team.specialists)}))
        for hospital in scenario.hospitals:
            seed_invokes.append((CONTRACT_HOSPITAL, "register_hospital",
                                 {"hospital_id": hospital.hospital_id,
                                  "location": [hospital.x, hospital.y],
                                  "capabilities": sorted(hospital.capabilities)}))
        for lid in leader_ids + gateway_ids:
            seed_invokes.append((CONTRACT_DRONE, "register_drone",
                                 {"drone_id": lid, "location": [0.0, 0.0]}))
        self.genesis = build_genesis(self.registry, peer_ids, seed_invokes)

        # boat-side nodes share the boat position and a full mesh
        edge_side = [EDGE_ID, EDGE_CLIENT_ID] + orderer_ids + peer_ids
        self._boat_node_ids = set(edge_side)
        for node_id in edge_side:
            self.net.attach(node_id, "edge", radios["edge"], boat_pos)
        for i, a in enumerate(edge_side):
            for b in edge_side[i + 1:]:
                self.net.add_link(a, b, LinkKind.EDGE_TO_EDGE)

        self.edge = EdgeSink(self.ctx, EDGE_ID, on_sync_report=self._submit_synced_report)
        raft_trace = _RaftTraceAdapter(self.recorder)
        batch = scenario.ledger.batch_config()
        self.orderers = [OrdererNode(self.sim, self.net, oid, orderer_ids, peer_ids,
                                     self.genesis, batch, raft_trace)
                         for oid in orderer_ids]
        self.peers = [PeerNode(self.sim, self.net, pid, self.registry,
                               scenario.ledger.endorsement_threshold, self.genesis,
                               on_commit=self._on_peer_commit)
                      for pid in peer_ids]
        self.edge_client = ClientNode(self.sim, self.net, EDGE_CLIENT_ID,
                                      peer_ids, orderer_ids)

        # clusters
        self.leaders: list[LeaderDrone] = []
        self.smalls: list[SmallDrone] = []
        area = scenario.area
        for cluster in scenario.clusters:
            sub = tuple(cluster.sub_area) if cluster.sub_area else (
                area.x, area.y, area.width, area.height)
            leader_id = f"{cluster.name}-leader"
            leader_spec = specs[cluster.leader_profile]
            small_spec = specs[cluster.small_profile]
            home = (sub[0] + sub[2] / 2.0, sub[1] + sub[3] / 2.0)
            self.recorder.record({"t_us": 0, "kind": "cluster_def",
                                  "node": cluster.name, "fp_x": sub[0], "fp_y": sub[1],
                                  "x": sub[2], "y": sub[3]})
            usable_s = (devices.endurance_s(devices.Battery(small_spec.battery_capacity_mj),
                                            small_spec.hover_power_w)
                        * (1.0 - 0.2))
            plan = sweep_plan(sub, cluster.smalls, camera.footprint_side(),
                              scenario.fleet.small_speed_mps, usable_s)
            if plan.area_too_large:
                self.recorder.record({"t_us": 0, "kind": "area_too_large",
                                      "node": cluster.name,
                                      "detail": f"predicted_coverage={plan.predicted_coverage:.3f}"})

            self.net.attach(leader_id, "leader", radios["leader"],
                            lambda lid=leader_id: self._nodes_by_id[lid].position())
            leader = LeaderDrone(self.ctx, leader_id, cluster.name, leader_spec,
                                 cluster.leader_mode or None, home, EDGE_ID,
                                 peer_ids, orderer_ids)
            self._nodes_by_id[leader_id] = leader
            self.leaders.append(leader)
            self.recorder.record({"t_us": 0, "kind": "node_def", "node": leader_id,
                                  "detail": cluster.name})

            for s in range(cluster.smalls):
                small_id = f"{cluster.name}-s{s}"
                self.net.attach(small_id, "small", radios["small"],
                                lambda sid=small_id: self._nodes_by_id[sid].position())
                small = SmallDrone(self.ctx, small_id, cluster.name, small_spec,
                                   leader_id, leader_spec.board,
                                   cluster.leader_mode or None,
                                   plan.waypoints[s])
                self._nodes_by_id[small_id] = small
                self.smalls.append(small)
                self.net.add_link(small_id, leader_id, LinkKind.SMALL_TO_LEADER)
                self.recorder.record({"t_us": 0, "kind": "node_def", "node": small_id,
                                      "detail": cluster.name})

        # gateways: relay-only big drones hovering at fixed posts
        self.gateways: list[LeaderDrone] = []
        for gw in scenario.gateways:
            spec = specs[gw.profile]
            self.net.attach(gw.name, "gateway", radios["leader"],
                            lambda gid=gw.name: self._nodes_by_id[gid].position())
            node = LeaderDrone(self.ctx, gw.name, gw.name, spec, None,
                               (gw.x, gw.y), EDGE_ID, peer_ids, orderer_ids,
                               detection_enabled=False)
            self._nodes_by_id[gw.name] = node
            self.gateways.append(node)
            self.recorder.record({"t_us": 0, "kind": "node_def", "node": gw.name,
                                  "detail": gw.name})

        big_ids = leader_ids + gateway_ids
        for i, la in enumerate(big_ids):
            for lb in big_ids[i + 1:]:
                self.net.add_link(la, lb, LinkKind.LEADER_TO_LEADER)
        for lid in big_ids:
            for node_id in [EDGE_ID] + orderer_ids + peer_ids:
                self.net.add_link(lid, node_id, LinkKind.LEADER_TO_EDGE)

        # fault schedule
        self.sim.register("fault-injector", self._inject_fault)
        for fault in self.scenario.faults:
            self.sim.schedule_at(s_to_us(fault.t_s), "fault-injector",
                                 (fault.a, fault.b, fault.up))

        self.sim.register("mission-control", self._mission_control)
        self.sim.schedule_at(s_to_us(self.duration_s), "mission-control", "end")

        for victim in self.victims:
            self.recorder.record({"t_us": 0, "kind": "victim_truth",
                                  "victim_id": victim.victim_id,
                                  "x": victim.x, "y": victim.y})

        for orderer in self.orderers:
            orderer.start()
        for leader in self.leaders:
            leader.start()
        for gateway in self.gateways:
            gateway.start()
        for small in self.smalls:
            small.start()

    def _place_victims(self) -> list[Victim]:
        spec = self.scenario.victims
        victims = []
        if spec.positions:
            for i, (x, y) in enumerate(spec.positions):
                victims.append(Victim(f"victim-{i}", float(x), float(y)))
            return victims
        stream = self.sim.streams.get(VICTIM_STREAM)
        area = self.scenario.area
        for i in range(spec.count):
            x = area.x + stream.next_uniform() * area.width
            y = area.y + stream.next_uniform() * area.height
            victims.append(Victim(f"victim-{i}", x, y))
        return victims

    # -- hooks -----------------------------------------------------------------

    def _charge_tx(self, node_id: str, category: str, mj: float) -> None:
        node = self._nodes_by_id.get(node_id)
        if node is not None:
            node.charge(category, mj)
        else:
            # boat-powered equipment: recorded, not battery-limited
            self.recorder.record({"t_us": self.sim.now, "kind": "energy",
                                  "node": node_id, "category": category, "mj": mj})

    def _on_peer_commit(self, peer_id: str, block) -> None:
        self.recorder.record({"t_us": self.sim.now, "kind": "block_commit",
                              "node": peer_id, "block": block.header.number})
        for idx, (tx, flag) in enumerate(zip(block.txs, block.validity_flags)):
            self.recorder.record({"t_us": self.sim.now, "kind": "tx_commit",
                                  "node": peer_id, "tx_id": tx.tx_id_hex,
                                  "block": block.header.number, "tx_index": idx,
                                  "flag": flag})

    def _submit_synced_report(self, args: dict) -> None:
        def on_result(result):
            self.recorder.record({"t_us": self.sim.now, "kind": "report_tx",
                                  "node": EDGE_CLIENT_ID,
                                  "frame_id": args["victim_id"],
                                  "latency_us": result["latency_us"],
                                  "detail": "ok" if result["ok"] else result["error"],
                                  "flag": result["receipt"].flag if result["receipt"] else None})

        self.edge_client.client.submit_invoke(CONTRACT_DRONE, "report_victim", args,
                                              self.ctx.config.urgent_report_bytes,
                                              on_result)

    def _inject_fault(self, payload) -> None:
        a, b, up = payload
        if b == "boat":
            # one radio serves the whole boat: every boat-side link of `a`
            for key in sorted(self.net.links):
                if a in key:
                    other = key[1] if key[0] == a else key[0]
                    if other in self._boat_node_ids:
                        self.net.set_link_state(a, other, up)
            return
        self.net.set_link_state(a, b, up)

    def _mission_control(self, payload) -> None:
        if payload != "end":
            return
        for node in self._nodes_by_id.values():
            node.return_to_boat(mission_end=True)
        if self.scenario.fleet.end_query:
            for leader in self.leaders:
                self._end_query(leader.id)

    def _end_query(self, drone_id: str) -> None:
        sent_at = self.sim.now

        def on_result(result):
            self.recorder.record({"t_us": self.sim.now, "kind": "query_tx",
                                  "node": EDGE_CLIENT_ID, "frame_id": drone_id,
                                  "latency_us": self.sim.now - sent_at,
                                  "detail": "ok" if result["ok"] else result["error"]})

        self.edge_client.client.query(CONTRACT_DRONE, "get_drone",
                                      {"drone_id": drone_id}, on_result)

    # -- execution ----------------------------------------------------------------

    def run(self) -> RunResult:
        self.sim.run_until(s_to_us(self.duration_s))
        self.sim.run_until(s_to_us(self.duration_s + self.scenario.grace_s))
        for node in self._nodes_by_id.values():
            node.accrue()
        violations = self._check_invariants()
        report = compute_report(self.recorder.rows)
        report["scenario"] = self.scenario.name
        report["master_seed"] = self.scenario.master_seed
        report["invariant_violations"] = violations
        result = RunResult(self.scenario, report, self.recorder, self.victims,
                           violations, self.sim, self.net, self.leaders, self.smalls,
                           self.orderers, self.peers, self.edge)
        if self.out_dir is not None:
            result.out_paths = self._export(report)
        return result

    def _check_invariants(self) -> list[str]:
        violations = []
        # energy books: battery drain must equal the sum of charged events
        for node_id in sorted(self._nodes_by_id):
            node = self._nodes_by_id[node_id]
            total = 0.0
            for row in self.recorder.rows:
                if row.get("kind") == "energy" and row.get("node") == node_id:
                    total += row["mj"]
            if total != node.battery.total_drained_mj:
                violations.append(f"energy-books:{node_id}")
        # committed chains byte-identical across peers at equal heights
        heights = {p.id: p.chain.height for p in self.peers}
        min_height = min(heights.values()) if heights else 0
        reference = self.peers[0].chain.blocks if self.peers else []
        for peer in self.peers[1:]:
            for n in range(min_height + 1):
                if peer.chain.blocks[n] != reference[n]:
                    violations.append(f"log-matching:{peer.id}:block{n}")
                    break
        # every peer chain verifies
        for peer in self.peers:
            check = verify_chain(peer.chain, self.registry,
                                 self.scenario.ledger.endorsement_threshold)
            if not check.ok:
                violations.append(f"verify-chain:{peer.id}:{check}")
        # raft election safety
        report = compute_report(self.recorder.rows)
        for term in election_safety_violations(report):
            violations.append(f"election-safety:term{term}")
        return violations

    def _export(self, report: dict) -> dict:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "report": self.out_dir / "report.json",
            "trace": self.out_dir / "trace.csv",
            "ledger": self.out_dir / "ledger.bin",
            "ledger_index": self.out_dir / "ledger.index.json",
            "raft_trace": self.out_dir / "raft.jsonl",
        }
        write_report(report, paths["report"])
        self.recorder.write_csv(paths["trace"])
        export_chain(self.peers[0].chain, paths["ledger"], paths["ledger_index"],
                     self.registry, self.scenario.ledger.endorsement_threshold)
        with open(paths["raft_trace"], "w") as fh:
            for row in self.recorder.rows:
                if row.get("kind") == "raft":
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
        return {k: str(v) for k, v in paths.items()}


def run_scenario(scenario: Scenario, out_dir=None, seed: int | None = None,
                 until_s: float | None = None) -> RunResult:
    if seed is not None and seed != scenario.master_seed:
        scenario = replace(scenario, master_seed=seed)
    return MissionRunner(scenario, out_dir, until_s).run()
