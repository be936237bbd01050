"""Scenario-level mission properties: relay fallback, outage flows, determinism."""

import hashlib
import json
from pathlib import Path

from iodsim.metrics import compute_report, read_trace_csv
from iodsim.runner import run_scenario
from iodsim.scenario import (
    AreaSpec,
    BoatSpec,
    ClusterSpec,
    FaultSpec,
    FleetSpec,
    ProfilesSpec,
    Scenario,
    VictimsSpec,
    builtin_scenario,
)


def verified_positive_ids(rows):
    return {r["frame_id"] for r in rows
            if r.get("kind") == "detection" and r.get("stage") == "verified"
            and r.get("positive")}


def edge_received_ids(rows):
    return {r["frame_id"] for r in rows
            if r.get("kind") == "edge_receive" and r.get("frame_id")}


def assert_mission_flow(result):
    """The acceptance-style delivery discipline for any finished run."""
    rows = result.recorder.rows
    verified = verified_positive_ids(rows)
    received = edge_received_ids(rows)
    assert verified <= received, f"undelivered urgent evidence: {verified - received}"
    assert result.report["edge_duplicate_urgent"] == 0
    for r in rows:
        if r.get("kind") == "edge_receive" and r.get("detail") == "live" \
                and r.get("frame_id"):
            assert r["frame_id"] in verified
    for victim in result.victims:
        if victim.discovered_at_us is not None and victim.reported_at_us is not None:
            assert victim.discovered_at_us <= victim.reported_at_us
    assert not result.violations


def relay_scenario(n_clusters=3, outage_cluster="c0", seed=9):
    strip = 140.0
    clusters = [
        ClusterSpec(f"c{i}", smalls=1,
                    sub_area=[i * strip, 0.0, strip, strip])
        for i in range(n_clusters)
    ]
    return Scenario(
        name="relay-test",
        master_seed=seed,
        duration_s=90.0,
        grace_s=180.0,
        area=AreaSpec(0.0, 0.0, strip * n_clusters, strip),
        boat=BoatSpec(strip * n_clusters / 2.0, -80.0),
        clusters=clusters,
        victims=VictimsSpec(positions=[[70.0, 35.0]]),  # inside c0 only
        profiles=ProfilesSpec(accuracies={"YOLOv4": 1.0}),
        fleet=FleetSpec(false_positive_rate=0.0, verify_cap=1.0,
                        update_info_period_s=0.0, end_query=False),
        faults=[FaultSpec(0.0, f"{outage_cluster}-leader", "boat", False)],
    )


class TestFallbackRelay:
    def test_two_hop_delivery_and_edge_position_learned(self):
        result = run_scenario(relay_scenario(n_clusters=2))
        rows = result.recorder.rows
        verified = verified_positive_ids(rows)
        assert verified
        assert verified <= edge_received_ids(rows)
        # the urgent frame reached the edge from the relay, not the origin
        urgent_sends = [d for d in result.net.deliveries
                        if d["tag"] == "urgent-frame" and d["dst"] == "edge"
                        and not d["drop"]]
        assert urgent_sends and all(d["src"] == "c1-leader" for d in urgent_sends)
        leader_c0 = next(l for l in result.leaders if l.id == "c0-leader")
        assert leader_c0.known_edge_position is not None
        # the relay leader submitted the ledger report on the origin's behalf
        reports = [r for r in rows if r.get("kind") == "report_tx"
                   and r.get("detail") == "ok"]
        assert reports and all(r["node"] == "c1-leader" for r in reports)
        assert_mission_flow(result)

    def test_two_candidates_exactly_one_forwards_lowest_id(self):
        result = run_scenario(relay_scenario(n_clusters=3))
        rows = result.recorder.rows
        assert verified_positive_ids(rows)
        forwards = [d for d in result.net.deliveries
                    if d["tag"] == "relay-forward" and not d["drop"]]
        assert forwards
        # both c1 and c2 offered; only the lowest id carried the traffic
        assert {d["dst"] for d in forwards} == {"c1-leader"}
        offers = [d for d in result.net.deliveries if d["tag"] == "relay-offer"]
        assert {d["src"] for d in offers} == {"c1-leader", "c2-leader"}
        assert result.report["edge_duplicate_urgent"] == 0
        assert_mission_flow(result)

    def test_no_relay_path_queues_until_boat_sync(self):
        result = run_scenario(relay_scenario(n_clusters=1))
        rows = result.recorder.rows
        queued = [r for r in rows if r.get("kind") == "urgent_queued"
                  and r.get("detail") == "no_relay_path"]
        assert queued
        # delivery still happens, via the sync path after return-to-boat
        verified = verified_positive_ids(rows)
        assert verified <= edge_received_ids(rows)
        synced = [r for r in rows if r.get("kind") == "edge_receive"
                  and r.get("detail") == "synced" and r.get("frame_id")]
        assert {r["frame_id"] for r in synced} >= verified
        victim = result.victims[0]
        assert victim.reported_at_us is not None
        assert victim.reported_at_us > result.scenario.duration_s * 1e6
        assert_mission_flow(result)


class TestOutageMission:
    def test_bundled_outage_scenario_delivers_everything(self):
        scenario = builtin_scenario("paper-baseline-outage")
        result = run_scenario(scenario, until_s=300.0)
        assert_mission_flow(result)
        # during the outage the rule falls back to live behavior: the leader
        # keeps accepting frames from smalls, but urgent evidence queues
        rows = result.recorder.rows
        queued = [r for r in rows if r.get("kind") == "urgent_queued"]
        verified = verified_positive_ids(rows)
        if verified:
            assert verified <= edge_received_ids(rows)
        assert queued or not verified  # an outage with no verified hits is legal

    def test_two_cluster_relay_scenario(self):
        scenario = builtin_scenario("two-cluster-relay")
        result = run_scenario(scenario, until_s=300.0)
        assert_mission_flow(result)


class TestDeterminism:
    def test_same_seed_byte_identical_artifacts(self, tmp_path):
        scenario = builtin_scenario("paper-baseline")
        hashes = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            result = run_scenario(scenario, out_dir=out, until_s=180.0)
            digest = {}
            for name, path in result.out_paths.items():
                digest[name] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
            hashes.append(digest)
        assert hashes[0] == hashes[1]

    def test_different_seed_changes_outcomes_but_not_invariants(self):
        scenario = builtin_scenario("paper-baseline")
        reports = []
        for seed in (1, 2):
            result = run_scenario(scenario, seed=seed, until_s=120.0)
            assert_mission_flow(result)
            reports.append(result.report)
        assert reports[0]["victims"] != reports[1]["victims"]


class TestReportRecomputability:
    def test_report_recomputed_from_written_trace(self, tmp_path):
        scenario = builtin_scenario("paper-baseline")
        result = run_scenario(scenario, out_dir=tmp_path, until_s=120.0)
        with open(tmp_path / "report.json") as fh:
            written = json.load(fh)
        rows = read_trace_csv(tmp_path / "trace.csv")
        recomputed = compute_report(rows)
        for key in ("victims", "energy_mj", "offload_decisions", "edge_bytes",
                    "coverage_fraction", "ledger", "raft", "detections"):
            assert recomputed[key] == written[key], key


class TestLedgerCrossCheck:
    def test_every_verified_positive_has_a_committed_report(self):
        scenario = builtin_scenario("paper-baseline")
        result = run_scenario(scenario)
        rows = result.recorder.rows
        verified = verified_positive_ids(rows)
        assert verified, "baseline run produced no verified positives"
        reported_ok = {r["frame_id"] for r in rows
                       if r.get("kind") == "report_tx" and r.get("detail") == "ok"}
        assert verified <= reported_ok
        # and the committed world state holds each victim case
        import json as _json
        state_records = {}
        for key, (value, _v) in result.peers[0].state.items():
            if key.startswith("victim/"):
                state_records[key.split("/", 1)[1]] = _json.loads(value)
        for frame_id in verified:
            assert frame_id in state_records


class TestGatewayRelay:
    def test_gateway_carries_urgent_traffic_during_outage(self):
        from iodsim.scenario import GatewaySpec
        scenario = relay_scenario(n_clusters=1)
        scenario.gateways = [GatewaySpec("gw0", 70.0, -40.0)]
        result = run_scenario(scenario)
        rows = result.recorder.rows
        verified = verified_positive_ids(rows)
        assert verified
        # urgent evidence flowed through the gateway while c0 was cut off
        urgent_to_edge = [d for d in result.net.deliveries
                          if d["tag"] == "urgent-frame" and d["dst"] == "edge"
                          and not d["drop"]]
        assert urgent_to_edge and all(d["src"] == "gw0" for d in urgent_to_edge)
        assert verified <= edge_received_ids(rows)
        # and the victim was reported while the mission was still flying
        victim = result.victims[0]
        assert victim.reported_at_us is not None
        assert victim.reported_at_us < result.scenario.duration_s * 1e6
        assert_mission_flow(result)

    def test_gateway_never_runs_detection(self):
        from iodsim.scenario import GatewaySpec
        scenario = relay_scenario(n_clusters=1)
        scenario.gateways = [GatewaySpec("gw0", 70.0, -40.0)]
        result = run_scenario(scenario)
        gateway_detections = [r for r in result.recorder.rows
                              if r.get("kind") == "detection" and r.get("node") == "gw0"]
        assert gateway_detections == []


class TestMovingBoat:
    def test_boat_sailing_out_of_range_drops_leader_sends(self):
        scenario = relay_scenario(n_clusters=1, seed=13)
        scenario.faults = []
        scenario.links.leader_range_m = 800.0
        scenario.links.edge_range_m = 800.0
        # periodic ledger updates give the leader edge-bound traffic to lose
        scenario.fleet.update_info_period_s = 25.0
        # the end-of-mission flight back to the distant boat takes ~300 s
        scenario.grace_s = 450.0
        # boat starts near, sails 3 km away by t=40 s, stays there
        scenario.boat.track = [[0.0, 70.0, -80.0], [40.0, 70.0, -3000.0]]
        result = run_scenario(scenario)
        drops = [d for d in result.net.deliveries
                 if d["src"] == "c0-leader" and d["drop"] == "OutOfRange"]
        assert drops, "no out-of-range drops despite the boat sailing away"
        # whatever verified evidence existed still landed via queue + sync
        rows = result.recorder.rows
        assert verified_positive_ids(rows) <= edge_received_ids(rows)
        assert_mission_flow(result)
