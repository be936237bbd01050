"""Drone state machines and mission logic: capture, detect, verify, relay, return."""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .contracts import CONTRACT_DRONE
from .devices import Battery, DeviceProfile, HardwareSpec
from .kernel import Simulator, ms_to_us, s_to_us
from .network import Datagram, Network
from .offload import LinkStatus, NodeFlags, PolicyConfig, decide, select_algorithm
from .txflow import LedgerClient

DETECTION_STREAM = "detection"

STATUS_FLYING = "flying"
STATUS_RETURNING = "returning"
STATUS_AT_BOAT = "at_boat"
STATUS_DEPLETED = "depleted"

STAGE_FIRST_PASS = "first_pass"
STAGE_VERIFIED = "verified"


@dataclass(frozen=True)
class CameraModel:
    altitude_m: float = 60.0
    fov_deg: float = 60.0

    def footprint_side(self) -> float:
        return 2.0 * self.altitude_m * math.tan(math.radians(self.fov_deg) / 2.0)


@dataclass
class Victim:
    victim_id: str
    x: float
    y: float
    discovered_at_us: int | None = None
    reported_at_us: int | None = None


@dataclass(frozen=True)
class FrameRef:
    frame_id: str
    source: str
    captured_at_us: int
    size_bytes: int
    footprint: tuple  # (cx, cy, side)
    contains_victim: bool


@dataclass(frozen=True)
class UrgentReport:
    """Verified-positive evidence en route to the edge, by any path."""

    msg_id: str
    frame: FrameRef
    reporter: str
    urgency: str
    reported_at_us: int


def footprint_contains(footprint: tuple, x: float, y: float) -> bool:
    cx, cy, side = footprint
    half = side / 2.0
    return abs(x - cx) <= half and abs(y - cy) <= half


@dataclass
class FleetConfig:
    capture_period_s: float = 1.0
    camera: CameraModel = field(default_factory=CameraModel)
    small_speed_mps: float = 10.0
    big_speed_mps: float = 15.0
    turnaround_s: float = 60.0
    verify_boost: float = 0.10
    verify_cap: float = 0.99
    false_positive_rate: float = 0.02
    frame_size_bytes: int = 2_300_000
    result_size_bytes: int = 10_000
    urgent_report_bytes: int = 500_000
    update_info_bytes: int = 4_000_000
    update_info_period_s: float = 60.0
    urgency: str = "urgent"
    verification_by_leader: bool = True
    relay_offer_window_ms: float = 100.0
    policy: PolicyConfig = field(default_factory=PolicyConfig)


class MissionContext:
    """Shared wiring every node needs: clock, radio, victims, recorder."""

    def __init__(self, sim: Simulator, net: Network, config: FleetConfig,
                 victims: list[Victim], edge_id: str,
                 boat_position: Callable[[], tuple[float, float]],
                 record: Callable[[dict], None]):
        self.sim = sim
        self.net = net
        self.config = config
        self.victims = victims
        self.edge_id = edge_id
        self.boat_position = boat_position
        self.record = record
        self.detection = sim.streams.register(DETECTION_STREAM)

    def victims_in(self, footprint: tuple) -> list[Victim]:
        return [v for v in self.victims if footprint_contains(footprint, v.x, v.y)]

    def draw_positive(self, truth: bool, accuracy: float, fpr: float) -> bool:
        p = accuracy if truth else fpr
        return self.detection.next_uniform() < p


@dataclass
class FleetTimer:
    kind: str
    data: object = None
    gen: int = 0


class DroneNode:
    """Shared airframe mechanics: movement legs, energy accrual, battery."""

    def __init__(self, ctx: MissionContext, node_id: str, role: str, cluster: str,
                 hardware: HardwareSpec, board_mode: str | None,
                 home: tuple[float, float]):
        self.ctx = ctx
        self.id = node_id
        self.role = role
        self.cluster = cluster
        self.board = hardware.board
        self.board_mode = board_mode or hardware.board.default_mode
        self.hover_power_w = hardware.hover_power_w
        self.battery = Battery(hardware.battery_capacity_mj)
        self.storage_capacity = hardware.storage_capacity_bytes
        self.storage_used = 0
        self.home = home
        self.status = STATUS_FLYING
        self.mission_over = False
        self._pos = home
        self._leg = None  # (start_pos, start_us, dest, speed_mps, arrive_us)
        self._leg_gen = 0
        self._last_accrue_us = ctx.sim.now
        ctx.sim.register(node_id, self.on_event)

    # -- movement -------------------------------------------------------------

    def position(self) -> tuple[float, float]:
        if self._leg is None:
            return self._pos
        (sx, sy), start_us, (dx, dy), _speed, arrive_us = self._leg
        now = self.ctx.sim.now
        if now >= arrive_us:
            return (dx, dy)
        if arrive_us == start_us:
            return (dx, dy)
        frac = (now - start_us) / (arrive_us - start_us)
        return (sx + (dx - sx) * frac, sy + (dy - sy) * frac)

    def fly_to(self, dest: tuple[float, float], speed_mps: float, arrive_kind: str,
               data=None) -> int:
        start = self.position()
        self._leg_gen += 1
        dist = math.dist(start, dest)
        travel_us = s_to_us(dist / speed_mps) if dist > 0 else 0
        arrive_us = self.ctx.sim.now + travel_us
        self._leg = (start, self.ctx.sim.now, dest, speed_mps, arrive_us)
        self.ctx.sim.schedule_at(arrive_us, self.id,
                                 FleetTimer(arrive_kind, data, self._leg_gen))
        return arrive_us

    def _arrived(self, timer: FleetTimer) -> bool:
        if timer.gen != self._leg_gen:
            return False  # superseded leg
        self._pos = self._leg[2]
        self._leg = None
        return True

    # -- energy -----------------------------------------------------------------

    def accrue(self) -> None:
        now = self.ctx.sim.now
        dt_us = now - self._last_accrue_us
        self._last_accrue_us = now
        if dt_us <= 0 or self.status in (STATUS_AT_BOAT, STATUS_DEPLETED):
            return
        dt_s = dt_us / 1_000_000.0
        self.charge("hover", self.hover_power_w * 1000.0 * dt_s)
        if self.status != STATUS_DEPLETED:
            self.charge("radio_idle", self.ctx.net.nodes[self.id].radio.idle_on_power_mw * dt_s)

    def charge(self, category: str, mj: float) -> None:
        if self.status == STATUS_DEPLETED:
            return
        result = self.battery.drain(mj)
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "energy", "node": self.id,
                         "category": category, "mj": result.drained_mj})
        if result.low_battery_crossed:
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "low_battery",
                             "node": self.id})
            self.on_low_battery()
        if result.depleted:
            self._deplete()

    def _deplete(self) -> None:
        lost_in_flight = self.status in (STATUS_FLYING, STATUS_RETURNING)
        self.status = STATUS_DEPLETED
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "drone_lost",
                         "node": self.id,
                         "detail": "depleted_en_route" if lost_in_flight else "depleted"})

    def on_low_battery(self) -> None:
        if self.status == STATUS_FLYING:
            self.return_to_boat()

    # -- return to boat -----------------------------------------------------------

    def return_to_boat(self, mission_end: bool = False) -> None:
        if self.status in (STATUS_DEPLETED,):
            return
        if mission_end:
            self.mission_over = True
        if self.status in (STATUS_RETURNING, STATUS_AT_BOAT):
            return
        self.accrue()
        self.status = STATUS_RETURNING
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "return_started",
                         "node": self.id})
        self.fly_to(self.ctx.boat_position(), self._speed(), "boat-arrive")

    def _speed(self) -> float:
        return self.ctx.config.small_speed_mps

    def _on_boat_arrive(self, timer: FleetTimer) -> None:
        if not self._arrived(timer) or self.status != STATUS_RETURNING:
            return
        self.accrue()
        self.status = STATUS_AT_BOAT
        self._sync_to_edge()
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "at_boat", "node": self.id})
        if not self.mission_over:
            self.battery.swap()
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "battery_swap",
                             "node": self.id})
            self.ctx.sim.schedule_in(s_to_us(self.ctx.config.turnaround_s), self.id,
                                     FleetTimer("relaunch"))

    def _sync_to_edge(self) -> None:
        raise NotImplementedError

    def _relaunch(self) -> None:
        raise NotImplementedError

    def on_event(self, payload) -> None:
        raise NotImplementedError


class SmallDrone(DroneNode):
    """Captures frames along a sweep path; consults the offload policy each frame."""

    def __init__(self, ctx: MissionContext, node_id: str, cluster: str,
                 hardware: HardwareSpec, leader_id: str, leader_board: DeviceProfile,
                 leader_mode: str | None, waypoints: list[tuple[float, float]]):
        home = waypoints[0] if waypoints else (0.0, 0.0)
        super().__init__(ctx, node_id, "small", cluster, hardware, None, home)
        self.leader_id = leader_id
        self.leader_board = leader_board
        self.leader_mode = leader_mode
        self.waypoints = waypoints or [home]
        self._wp_index = 0
        self._frame_seq = 0
        self._board_busy_until = 0

    def start(self) -> None:
        self._pos = self.waypoints[0]
        self._next_leg()
        self.ctx.sim.schedule_in(s_to_us(self.ctx.config.capture_period_s),
                                 self.id, FleetTimer("tick"))

    def _next_leg(self) -> None:
        if len(self.waypoints) < 2:
            return
        self._wp_index = (self._wp_index + 1) % len(self.waypoints)
        self.fly_to(self.waypoints[self._wp_index], self.ctx.config.small_speed_mps,
                    "wp-arrive")

    def on_event(self, payload) -> None:
        if isinstance(payload, FleetTimer):
            if payload.kind == "tick":
                self._tick()
            elif payload.kind == "wp-arrive":
                if self._arrived(payload) and self.status == STATUS_FLYING:
                    self._next_leg()
            elif payload.kind == "boat-arrive":
                self._on_boat_arrive(payload)
            elif payload.kind == "relaunch":
                self._relaunch()
            elif payload.kind == "local-done":
                self._local_done(payload.data)
            elif payload.kind == "verify-capture":
                self._verify_capture(payload)
            return
        if payload.tag == "verify-command":
            self._on_verify_command(payload.payload)

    def _tick(self) -> None:
        if self.status == STATUS_DEPLETED or (self.mission_over and self.status == STATUS_AT_BOAT):
            return
        self.accrue()
        if self.status == STATUS_FLYING and not self.battery.depleted:
            self._capture()
        self.ctx.sim.schedule_in(s_to_us(self.ctx.config.capture_period_s),
                                 self.id, FleetTimer("tick"))

    def _capture(self) -> FrameRef:
        cfg = self.ctx.config
        self._frame_seq += 1
        pos = self.position()
        footprint = (pos[0], pos[1], cfg.camera.footprint_side())
        truth = bool(self.ctx.victims_in(footprint))
        frame = FrameRef(f"{self.id}:{self._frame_seq}", self.id, self.ctx.sim.now,
                         cfg.frame_size_bytes, footprint, truth)
        usable, _reason = self.ctx.net.link_usable(self.id, self.leader_id)
        link = LinkStatus.from_radio(self.ctx.net.nodes[self.id].radio, usable)
        flags = NodeFlags(
            low_battery=self.battery.fraction <= self.battery.low_threshold_fraction,
            storage_full=self.storage_used + frame.size_bytes > self.storage_capacity,
        )
        decision = decide(self.board, self.leader_board, link, cfg.policy, flags,
                          self.board_mode, self.leader_mode)
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "frame_decision",
                         "node": self.id, "frame_id": frame.frame_id,
                         "action": decision.action, "rule": decision.rule,
                         "fp_x": footprint[0], "fp_y": footprint[1],
                         "fp_side": footprint[2], "truth": truth})
        self._execute(decision, frame, flags)
        return frame

    def _execute(self, decision, frame: FrameRef, flags: NodeFlags) -> None:
        action = decision.action
        if action == "offload":
            outcome = self.ctx.net.send_frame(self.id, self.leader_id, frame,
                                              frame.size_bytes, tag="frame")
            if not outcome.delivered:
                # link state changed against the decision; fall back as if down
                link = LinkStatus.from_radio(self.ctx.net.nodes[self.id].radio, False)
                fallback = decide(self.board, self.leader_board, link,
                                  self.ctx.config.policy, flags,
                                  self.board_mode, self.leader_mode)
                self._execute(fallback, frame, flags)
            return
        if action == "local":
            self._local_detect(frame, decision.algorithm)
            return
        if action == "store":
            if self.storage_used + frame.size_bytes <= self.storage_capacity:
                self.storage_used += frame.size_bytes
                self.ctx.record({"t_us": self.ctx.sim.now, "kind": "frame_stored",
                                 "node": self.id, "frame_id": frame.frame_id,
                                 "size": frame.size_bytes})
            else:
                self.ctx.record({"t_us": self.ctx.sim.now, "kind": "frame_dropped",
                                 "node": self.id, "frame_id": frame.frame_id,
                                 "detail": "storage_full"})
            return
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "frame_dropped",
                         "node": self.id, "frame_id": frame.frame_id, "detail": "policy"})

    def _local_detect(self, frame: FrameRef, algo: str) -> None:
        now = self.ctx.sim.now
        if self._board_busy_until > now:
            self.ctx.record({"t_us": now, "kind": "frame_dropped", "node": self.id,
                             "frame_id": frame.frame_id, "detail": "board_busy"})
            return
        latency_us = ms_to_us(self.board.per_frame_latency_ms(algo, self.board_mode))
        self._board_busy_until = now + latency_us
        self.ctx.sim.schedule_at(self._board_busy_until, self.id,
                                 FleetTimer("local-done", (frame, algo)))

    def _local_done(self, data) -> None:
        frame, algo = data
        if self.status == STATUS_DEPLETED:
            return
        self.charge("processing", self.board.processing_energy_mj(algo, self.board_mode))
        entry = self.board.entry(algo, self.board_mode)
        positive = self.ctx.draw_positive(frame.contains_victim, entry.accuracy,
                                          self.ctx.config.false_positive_rate)
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "detection",
                         "node": self.id, "frame_id": frame.frame_id, "algo": algo,
                         "stage": STAGE_FIRST_PASS, "positive": positive,
                         "truth": frame.contains_victim})
        result = {"frame": frame, "algo": algo, "positive": positive}
        self.ctx.net.send_datagram(Datagram(self.id, self.leader_id,
                                            self.ctx.config.result_size_bytes,
                                            "detect-result", result))

    # verification by the small drone (config switch): fly to the spot,
    # capture a closer frame, ship it to the leader for the verified pass
    def _on_verify_command(self, data) -> None:
        if self.status != STATUS_FLYING:
            return
        footprint = data["footprint"]
        self.fly_to((footprint[0], footprint[1]), self.ctx.config.small_speed_mps,
                    "verify-capture", data)

    def _verify_capture(self, timer: FleetTimer) -> None:
        if not self._arrived(timer) or self.status != STATUS_FLYING:
            return
        cfg = self.ctx.config
        self._frame_seq += 1
        pos = self.position()
        footprint = (pos[0], pos[1], cfg.camera.footprint_side())
        frame = FrameRef(f"{self.id}:v{self._frame_seq}", self.id, self.ctx.sim.now,
                         cfg.frame_size_bytes, footprint,
                         bool(self.ctx.victims_in(footprint)))
        self.ctx.net.send_frame(self.id, self.leader_id,
                                {"frame": frame, "stage": STAGE_VERIFIED},
                                frame.size_bytes, tag="verify-frame")
        self._next_leg()

    def _sync_to_edge(self) -> None:
        if self.storage_used:
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "boat_sync",
                             "node": self.id, "size": self.storage_used})
            edge = getattr(self.ctx, "edge_sink", None)
            if edge is not None:
                edge.receive_sync(self.id, self.storage_used, [])
            self.storage_used = 0

    def _relaunch(self) -> None:
        if self.status != STATUS_AT_BOAT or self.mission_over:
            return
        self.status = STATUS_FLYING
        self._last_accrue_us = self.ctx.sim.now
        self.fly_to(self.waypoints[self._wp_index], self.ctx.config.small_speed_mps,
                    "wp-arrive")


class LeaderDrone(DroneNode):
    """Cluster leader: serial detection board, verification flights, edge uplink."""

    def __init__(self, ctx: MissionContext, node_id: str, cluster: str,
                 hardware: HardwareSpec, board_mode: str | None,
                 home: tuple[float, float], edge_id: str,
                 peer_ids: list[str], orderer_ids: list[str],
                 detection_enabled: bool = True):
        super().__init__(ctx, node_id, "leader" if detection_enabled else "gateway",
                         cluster, hardware, board_mode, home)
        self.edge_id = edge_id
        self.detection_enabled = detection_enabled
        self.detect_algo = select_algorithm(self.board.algorithms(self.board_mode),
                                            ctx.config.policy, self.board,
                                            self.board_mode)
        self.client = LedgerClient(ctx.sim, ctx.net, node_id, peer_ids, orderer_ids)
        self._jobs: deque = deque()
        self._board_busy = False
        self._verify_queue: deque = deque()
        self._verifying = False
        self.urgent_queue: list[UrgentReport] = []
        self._pending_relays: dict[str, dict] = {}
        self.known_edge_position: tuple[float, float] | None = None
        self._update_seq = 0

    def start(self) -> None:
        self.ctx.sim.schedule_in(s_to_us(1.0), self.id, FleetTimer("tick"))
        period = self.ctx.config.update_info_period_s
        if period > 0:
            self.ctx.sim.schedule_in(s_to_us(period), self.id, FleetTimer("update-info"))

    # -- event dispatch --------------------------------------------------------

    def on_event(self, payload) -> None:
        if isinstance(payload, FleetTimer):
            handler = {
                "tick": lambda: self._tick(),
                "update-info": lambda: self._update_info(),
                "detect-done": lambda: self._detect_done(payload.data),
                "verify-arrive": lambda: self._verify_arrive(payload),
                "home-arrive": lambda: self._home_arrive(payload),
                "boat-arrive": lambda: self._on_boat_arrive(payload),
                "relaunch": lambda: self._relaunch(),
                "relay-select": lambda: self._relay_select(payload.data),
            }.get(payload.kind)
            if handler:
                handler()
            return
        tag = payload.tag
        if tag in ("propose-reply", "submit-reply", "tx-receipt", "query-reply"):
            self.client.route(payload)
        elif tag == "frame":
            self._enqueue_job(payload.payload, STAGE_FIRST_PASS)
        elif tag == "verify-frame":
            self._enqueue_job(payload.payload["frame"], STAGE_VERIFIED)
        elif tag == "detect-result":
            self._on_small_result(payload.payload)
        elif tag == "relay-query":
            self._on_relay_query(payload.src, payload.payload)
        elif tag == "relay-offer":
            self._on_relay_offer(payload.src, payload.payload)
        elif tag == "relay-forward":
            self._on_relay_forward(payload.payload)
        elif tag == "relay-done":
            self._on_relay_done(payload.payload)

    def _speed(self) -> float:
        return self.ctx.config.big_speed_mps

    def _tick(self) -> None:
        if self.status == STATUS_DEPLETED or (self.mission_over and self.status == STATUS_AT_BOAT):
            return
        self.accrue()
        self.ctx.sim.schedule_in(s_to_us(1.0), self.id, FleetTimer("tick"))

    # -- detection board ---------------------------------------------------------

    def _enqueue_job(self, frame: FrameRef, stage: str) -> None:
        if not self.detection_enabled:
            # gateway: pure relay toward the edge
            self.ctx.net.send_frame(self.id, self.edge_id, frame, frame.size_bytes,
                                    tag="frame")
            return
        if self.status in (STATUS_DEPLETED,):
            return
        self._jobs.append((frame, stage))
        self._kick_board()

    def _kick_board(self) -> None:
        if self._board_busy or not self._jobs or self.detect_algo is None:
            return
        frame, stage = self._jobs.popleft()
        self._board_busy = True
        latency_us = ms_to_us(self.board.per_frame_latency_ms(self.detect_algo,
                                                              self.board_mode))
        self.ctx.sim.schedule_in(latency_us, self.id,
                                 FleetTimer("detect-done", (frame, stage)))

    def _detect_done(self, data) -> None:
        frame, stage = data
        self._board_busy = False
        if self.status == STATUS_DEPLETED:
            return
        cfg = self.ctx.config
        self.charge("processing",
                    self.board.processing_energy_mj(self.detect_algo, self.board_mode))
        entry = self.board.entry(self.detect_algo, self.board_mode)
        accuracy = entry.accuracy
        if stage == STAGE_VERIFIED:
            accuracy = min(cfg.verify_cap, accuracy + cfg.verify_boost)
        positive = self.ctx.draw_positive(frame.contains_victim, accuracy,
                                          cfg.false_positive_rate)
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "detection",
                         "node": self.id, "frame_id": frame.frame_id,
                         "algo": self.detect_algo, "stage": stage,
                         "positive": positive, "truth": frame.contains_victim})
        if stage == STAGE_FIRST_PASS:
            if positive:
                self._queue_verification(frame)
            else:
                self._store_frame(frame)
        else:
            if positive:
                self._verified_positive(frame)
            else:
                self._store_frame(frame)
            if self.ctx.config.verification_by_leader:
                self._fly_home()
        self._kick_board()

    def _store_frame(self, frame: FrameRef) -> None:
        if self.storage_used + frame.size_bytes <= self.storage_capacity:
            self.storage_used += frame.size_bytes
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "frame_stored",
                             "node": self.id, "frame_id": frame.frame_id,
                             "size": frame.size_bytes})
        else:
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "frame_dropped",
                             "node": self.id, "frame_id": frame.frame_id,
                             "detail": "storage_full"})

    def _on_small_result(self, result: dict) -> None:
        if result["positive"] and self.detection_enabled:
            self._queue_verification(result["frame"])

    # -- verification ---------------------------------------------------------------

    def _queue_verification(self, frame: FrameRef) -> None:
        self._verify_queue.append(frame)
        self._start_verification()

    def _start_verification(self) -> None:
        if self._verifying or not self._verify_queue or self.status != STATUS_FLYING:
            return
        frame = self._verify_queue.popleft()
        self._verifying = True
        if self.ctx.config.verification_by_leader:
            target = (frame.footprint[0], frame.footprint[1])
            self.fly_to(target, self.ctx.config.big_speed_mps, "verify-arrive", frame)
        else:
            self.ctx.net.send_datagram(Datagram(
                self.id, frame.source, 1000, "verify-command",
                {"footprint": frame.footprint}))
            self._verifying = False

    def _verify_arrive(self, timer: FleetTimer) -> None:
        if not self._arrived(timer) or self.status != STATUS_FLYING:
            return
        cfg = self.ctx.config
        pos = self.position()
        footprint = (pos[0], pos[1], cfg.camera.footprint_side())
        frame = FrameRef(f"{self.id}:v{self.ctx.sim.now}", self.id, self.ctx.sim.now,
                         cfg.frame_size_bytes, footprint,
                         bool(self.ctx.victims_in(footprint)))
        self._enqueue_job(frame, STAGE_VERIFIED)

    def _fly_home(self) -> None:
        if self.status != STATUS_FLYING:
            self._verifying = False
            return
        self.fly_to(self.home, self.ctx.config.big_speed_mps, "home-arrive")

    def _home_arrive(self, timer: FleetTimer) -> None:
        if not self._arrived(timer):
            return
        self._verifying = False
        self._start_verification()

    # -- urgent reporting -------------------------------------------------------------

    def _verified_positive(self, frame: FrameRef) -> None:
        now = self.ctx.sim.now
        for victim in self.ctx.victims_in(frame.footprint):
            if victim.discovered_at_us is None:
                victim.discovered_at_us = now
                self.ctx.record({"t_us": now, "kind": "victim_discovered",
                                 "node": self.id, "victim_id": victim.victim_id,
                                 "frame_id": frame.frame_id})
        urgent = UrgentReport(frame.frame_id, frame, self.id,
                              self.ctx.config.urgency, now)
        usable, _ = self.ctx.net.link_usable(self.id, self.edge_id)
        if usable:
            self.send_urgent_to_edge(urgent)
        else:
            self.fallback_relay(urgent)

    def send_urgent_to_edge(self, urgent: UrgentReport) -> None:
        outcome = self.ctx.net.send_frame(self.id, self.edge_id, urgent,
                                          urgent.frame.size_bytes, tag="urgent-frame")
        if not outcome.delivered:
            self.fallback_relay(urgent)
            return
        self.submit_victim_report(urgent)

    def submit_victim_report(self, urgent: UrgentReport) -> None:
        args = report_args(urgent)
        cfg = self.ctx.config

        def on_result(result, urgent=urgent):
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "report_tx",
                             "node": self.id, "frame_id": urgent.msg_id,
                             "latency_us": result["latency_us"],
                             "detail": "ok" if result["ok"] else result["error"],
                             "flag": result["receipt"].flag if result["receipt"] else None})
            if not result["ok"]:
                self.queue_urgent(urgent, reason="ledger_unreachable", frame_sent=True)

        self.client.submit_invoke(CONTRACT_DRONE, "report_victim", args,
                                  cfg.urgent_report_bytes, on_result)

    def fallback_relay(self, urgent: UrgentReport) -> None:
        rid = urgent.msg_id
        outcomes = self.ctx.net.multicast_adjacent(
            self.id, Datagram(self.id, "", 1000, "relay-query", rid))
        if not any(o.delivered for o in outcomes):
            self.queue_urgent(urgent, reason="no_relay_path")
            return
        self._pending_relays[rid] = {"urgent": urgent, "offers": []}
        self.ctx.sim.schedule_in(ms_to_us(self.ctx.config.relay_offer_window_ms),
                                 self.id, FleetTimer("relay-select", rid))

    def _on_relay_query(self, src: str, rid: str) -> None:
        usable, _ = self.ctx.net.link_usable(self.id, self.edge_id)
        if usable:
            self.ctx.net.send_datagram(Datagram(self.id, src, 1000, "relay-offer", rid))

    def _on_relay_offer(self, src: str, rid: str) -> None:
        pending = self._pending_relays.get(rid)
        if pending is not None:
            pending["offers"].append(src)

    def _relay_select(self, rid: str) -> None:
        pending = self._pending_relays.pop(rid, None)
        if pending is None:
            return
        if not pending["offers"]:
            self.queue_urgent(pending["urgent"], reason="no_relay_path")
            return
        relay = sorted(pending["offers"])[0]
        outcome = self.ctx.net.send_frame(self.id, relay, pending["urgent"],
                                          pending["urgent"].frame.size_bytes,
                                          tag="relay-forward")
        if not outcome.delivered:
            self.queue_urgent(pending["urgent"], reason="relay_send_failed")

    def _on_relay_forward(self, urgent: UrgentReport) -> None:
        outcome = self.ctx.net.send_frame(self.id, self.edge_id, urgent,
                                          urgent.frame.size_bytes, tag="urgent-frame")
        if outcome.delivered:
            self.submit_victim_report(urgent)
            self.ctx.net.send_datagram(Datagram(
                self.id, urgent.reporter, 1000, "relay-done",
                {"msg_id": urgent.msg_id, "edge_position": self.ctx.net.position(self.edge_id)}))

    def _on_relay_done(self, data: dict) -> None:
        self.known_edge_position = tuple(data["edge_position"])
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "edge_position_learned",
                         "node": self.id, "detail": str(self.known_edge_position)})

    def queue_urgent(self, urgent: UrgentReport, reason: str,
                     frame_sent: bool = False) -> None:
        self.urgent_queue.append(urgent)
        self.ctx.record({"t_us": self.ctx.sim.now, "kind": "urgent_queued",
                         "node": self.id, "frame_id": urgent.msg_id, "detail": reason})

    # -- drone-info updates ----------------------------------------------------------

    def _update_info(self) -> None:
        if self.status in (STATUS_DEPLETED,) or self.mission_over:
            return
        cfg = self.ctx.config
        self._update_seq += 1
        pos = self.position()
        digest = hashlib.sha256(f"{self.id}:update:{self._update_seq}".encode()).hexdigest()
        args = {"drone_id": self.id, "location": [pos[0], pos[1]],
                "battery_fraction": round(self.battery.fraction, 6),
                "payload_digest": digest, "payload_size": cfg.update_info_bytes}

        def on_result(result):
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "update_tx",
                             "node": self.id, "latency_us": result["latency_us"],
                             "detail": "ok" if result["ok"] else result["error"]})

        self.client.submit_invoke(CONTRACT_DRONE, "update_drone_info", args,
                                  cfg.update_info_bytes, on_result)
        self.ctx.sim.schedule_in(s_to_us(cfg.update_info_period_s), self.id,
                                 FleetTimer("update-info"))

    # -- boat sync ----------------------------------------------------------------------

    def _sync_to_edge(self) -> None:
        edge = getattr(self.ctx, "edge_sink", None)
        if self.storage_used:
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "boat_sync",
                             "node": self.id, "size": self.storage_used})
        if edge is not None:
            edge.receive_sync(self.id, self.storage_used, list(self.urgent_queue))
        self.storage_used = 0
        self.urgent_queue.clear()

    def _relaunch(self) -> None:
        if self.status != STATUS_AT_BOAT or self.mission_over:
            return
        self.status = STATUS_FLYING
        self._last_accrue_us = self.ctx.sim.now
        self._verifying = False
        self.fly_to(self.home, self.ctx.config.big_speed_mps, "home-arrive")


def report_args(urgent: UrgentReport) -> dict:
    fp = urgent.frame.footprint
    return {"victim_id": urgent.msg_id,
            "location": [fp[0], fp[1]],
            "urgency": urgent.urgency,
            "reported_at_us": urgent.reported_at_us,
            "reporter": urgent.reporter}


class EdgeSink:
    """Boat-side data sink: receives urgent frames live, bulk data at sync."""

    def __init__(self, ctx: MissionContext, node_id: str,
                 on_sync_report: Callable[[dict], None] | None = None):
        self.ctx = ctx
        self.id = node_id
        self.live_bytes = 0
        self.synced_bytes = 0
        self.seen_msg_ids: set[str] = set()
        self.on_sync_report = on_sync_report
        ctx.sim.register(node_id, self.on_event)
        ctx.edge_sink = self

    def on_event(self, payload) -> None:
        if not hasattr(payload, "tag"):
            return
        if payload.tag == "urgent-frame":
            self._receive_urgent(payload.payload, live=True)
        elif payload.tag == "frame":
            # gateway-relayed raw frame
            self.live_bytes += payload.size_bytes
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "edge_receive",
                             "node": self.id, "size": payload.size_bytes,
                             "detail": "relay_frame"})

    def _receive_urgent(self, urgent: UrgentReport, live: bool) -> None:
        now = self.ctx.sim.now
        if urgent.msg_id in self.seen_msg_ids:
            self.ctx.record({"t_us": now, "kind": "edge_duplicate", "node": self.id,
                             "frame_id": urgent.msg_id})
            return
        self.seen_msg_ids.add(urgent.msg_id)
        size = urgent.frame.size_bytes
        if live:
            self.live_bytes += size
        else:
            self.synced_bytes += size
        for victim in self.ctx.victims_in(urgent.frame.footprint):
            if victim.reported_at_us is None:
                victim.reported_at_us = now
                self.ctx.record({"t_us": now, "kind": "victim_reported",
                                 "node": self.id, "victim_id": victim.victim_id,
                                 "frame_id": urgent.msg_id})
        self.ctx.record({"t_us": now, "kind": "edge_receive", "node": self.id,
                         "size": size, "frame_id": urgent.msg_id,
                         "detail": "live" if live else "synced"})

    def receive_sync(self, from_node: str, stored_bytes: int,
                     urgent_list: list[UrgentReport]) -> None:
        self.synced_bytes += stored_bytes
        if stored_bytes:
            self.ctx.record({"t_us": self.ctx.sim.now, "kind": "edge_receive",
                             "node": self.id, "size": stored_bytes,
                             "detail": "synced", "src": from_node})
        for urgent in urgent_list:
            self._receive_urgent(urgent, live=False)
            # a queued report is resubmitted even when its frame already
            # arrived on another path; duplicates collapse under MVCC
            if self.on_sync_report is not None:
                self.on_sync_report(report_args(urgent))


# -- sweep planning -------------------------------------------------------------

@dataclass
class SweepPlan:
    waypoints: list[list[tuple[float, float]]]  # per drone
    sweep_time_s: list[float]
    predicted_coverage: float
    area_too_large: bool


def sweep_plan(sub_area: tuple[float, float, float, float], n_drones: int,
               footprint_side: float, speed_mps: float,
               usable_endurance_s: float) -> SweepPlan:
    """Boustrophedon strips, one per drone, rows spaced one footprint apart."""
    x0, y0, width, height = sub_area
    strip_w = width / n_drones
    plans = []
    times = []
    for i in range(n_drones):
        sx0 = x0 + i * strip_w
        sx1 = sx0 + strip_w
        if strip_w <= footprint_side:
            xs = [(sx0 + sx1) / 2.0] * 2
        else:
            xs = [sx0 + footprint_side / 2.0, sx1 - footprint_side / 2.0]
        if height <= footprint_side:
            ys = [y0 + height / 2.0]
        else:
            n_rows = math.ceil(height / footprint_side)
            first = y0 + footprint_side / 2.0
            last = y0 + height - footprint_side / 2.0
            step = (last - first) / (n_rows - 1) if n_rows > 1 else 0.0
            ys = [first + k * step for k in range(n_rows)]
        waypoints = []
        for k, y in enumerate(ys):
            row = [(xs[0], y), (xs[1], y)] if k % 2 == 0 else [(xs[1], y), (xs[0], y)]
            waypoints.extend(row)
        deduped = [waypoints[0]]
        for wp in waypoints[1:]:
            if wp != deduped[-1]:
                deduped.append(wp)
        plans.append(deduped)
        length = sum(math.dist(deduped[j], deduped[j + 1])
                     for j in range(len(deduped) - 1))
        times.append(length / speed_mps if speed_mps > 0 else 0.0)
    worst = max(times) if times else 0.0
    too_large = worst > usable_endurance_s
    coverage = 1.0 if worst == 0 else min(1.0, usable_endurance_s / worst)
    return SweepPlan(plans, times, coverage, too_large)
