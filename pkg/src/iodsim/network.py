"""Simulated radio network: datagrams, bulk frame transfers, range checks, faults."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .kernel import SimError, Simulator, ms_to_us

MAX_DATAGRAM_BYTES = 65508
FRAME_SIZE_BYTES = 2_300_000

# One-way line through the two measured UDP points (10 kB -> 3.7 ms,
# 65508 B -> 5.6 ms); serves control messages and bulk transfers.
DATAGRAM_SLOPE_MS_PER_BYTE = (5.6 - 3.7) / (65508 - 10000)
DATAGRAM_INTERCEPT_MS = 3.7 - DATAGRAM_SLOPE_MS_PER_BYTE * 10000

# Frame-transfer envelope and the planning value used by offload decisions.
FRAME_LATENCY_MIN_MS = 200.0
FRAME_LATENCY_MAX_MS = 300.0
FRAME_DECISION_MS = 300.0

# Radio powers: tx derived from the 650 mJ / 200 ms and 975 mJ / 300 ms
# per-frame endpoints; idle-on is the midpoint of the 400-500 mW dongle draw.
TX_POWER_MW = 3250.0
RADIO_IDLE_MW = 450.0

JITTER_STREAM = "link-jitter"
LOSS_STREAM = "link-loss"


class NetworkError(SimError):
    pass


class UnattachedError(NetworkError):
    pass


class OversizePayloadError(NetworkError):
    pass


class NotALeaderError(NetworkError):
    pass


class UnknownLinkError(NetworkError):
    pass


class LinkKind(Enum):
    SMALL_TO_LEADER = "small-to-leader"
    LEADER_TO_LEADER = "leader-to-leader"
    LEADER_TO_EDGE = "leader-to-edge"
    EDGE_TO_EDGE = "edge-to-edge"


@dataclass(frozen=True)
class FrameLatency:
    min_ms: float = FRAME_LATENCY_MIN_MS
    max_ms: float = FRAME_LATENCY_MAX_MS
    decision_ms: float = FRAME_DECISION_MS


@dataclass(frozen=True)
class RadioProfile:
    range_m: float
    datagram_intercept_ms: float = DATAGRAM_INTERCEPT_MS
    datagram_slope_ms_per_byte: float = DATAGRAM_SLOPE_MS_PER_BYTE
    frame_latency: FrameLatency = FrameLatency()
    tx_power_mw: float = TX_POWER_MW
    idle_on_power_mw: float = RADIO_IDLE_MW

    def datagram_latency_ms(self, size_bytes: int) -> float:
        return self.datagram_intercept_ms + self.datagram_slope_ms_per_byte * size_bytes


def default_radio_profiles() -> dict[str, RadioProfile]:
    return {
        "small": RadioProfile(range_m=2000.0),
        "leader": RadioProfile(range_m=5000.0),
        "edge": RadioProfile(range_m=10000.0),
    }


@dataclass(frozen=True)
class Datagram:
    src: str
    dst: str
    size_bytes: int
    tag: str
    payload: object = None


@dataclass(frozen=True)
class DeliveryOutcome:
    delivered: bool
    at_us: int | None = None
    reason: str | None = None

    @staticmethod
    def delivered_at(t: int) -> "DeliveryOutcome":
        return DeliveryOutcome(True, at_us=t)

    @staticmethod
    def dropped(reason: str) -> "DeliveryOutcome":
        return DeliveryOutcome(False, reason=reason)


@dataclass(frozen=True)
class NetMessage:
    """What a destination handler receives at delivery time."""

    src: str
    dst: str
    tag: str
    payload: object
    size_bytes: int
    sent_at_us: int
    transfer: str  # "datagram" | "frame" | "bulk"


@dataclass
class Link:
    a: str
    b: str
    kind: LinkKind
    up: bool = True


@dataclass
class _Attachment:
    node_id: str
    role: str  # "small" | "leader" | "gateway" | "edge"
    radio: RadioProfile
    position_fn: Callable[[], tuple[float, float]]


def _link_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class NetConfig:
    frame_jitter: bool = True
    datagram_jitter_ms: float = 0.0
    loss_rate: float = 0.0


class Network:
    """Point-to-point radio fabric driven entirely by kernel events.

    Gateways count as leaders for link rules and multicast. Transmission
    energy is charged to the sender through energy_hook at send time for the
    full transfer duration; dropped sends cost nothing.
    """

    def __init__(self, sim: Simulator, config: NetConfig | None = None,
                 energy_hook: Callable[[str, str, float], None] | None = None,
                 on_event: Callable[[dict], None] | None = None):
        self.sim = sim
        self.config = config or NetConfig()
        self.energy_hook = energy_hook
        self.on_event = on_event
        self.nodes: dict[str, _Attachment] = {}
        self.links: dict[tuple[str, str], Link] = {}
        self.deliveries: list[dict] = []
        sim.streams.register(JITTER_STREAM)
        sim.streams.register(LOSS_STREAM)

    # -- topology ----------------------------------------------------------

    def attach(self, node_id: str, role: str, radio: RadioProfile,
               position_fn: Callable[[], tuple[float, float]]) -> None:
        self.nodes[node_id] = _Attachment(node_id, role, radio, position_fn)

    def add_link(self, a: str, b: str, kind: LinkKind) -> None:
        ra, rb = self._role(a), self._role(b)
        if kind is LinkKind.SMALL_TO_LEADER:
            pair = {ra, rb}
            if "small" not in pair or not (pair & {"leader", "gateway"}):
                raise NetworkError(f"small-to-leader link must join a small drone and a leader: {a}, {b}")
        if "small" in (ra, rb) and kind is not LinkKind.SMALL_TO_LEADER:
            raise NetworkError("small drones only link to their cluster leader")
        self.links[_link_key(a, b)] = Link(a, b, kind)

    def _role(self, node_id: str) -> str:
        att = self.nodes.get(node_id)
        if att is None:
            raise UnattachedError(node_id)
        return att.role

    def link_between(self, a: str, b: str) -> Link | None:
        return self.links.get(_link_key(a, b))

    def set_link_state(self, a: str, b: str, up: bool) -> None:
        link = self.link_between(a, b)
        if link is None:
            raise UnknownLinkError(f"{a} <-> {b}")
        link.up = up
        if self.on_event:
            self.on_event({"t_us": self.sim.now, "kind": "link_state", "a": a, "b": b,
                           "up": up})

    def position(self, node_id: str) -> tuple[float, float]:
        att = self.nodes.get(node_id)
        if att is None:
            raise UnattachedError(node_id)
        return att.position_fn()

    def in_range(self, a: str, b: str) -> bool:
        pa, pb = self.position(a), self.position(b)
        att_a, att_b = self.nodes[a], self.nodes[b]
        dist = math.dist(pa, pb)
        return dist <= min(att_a.radio.range_m, att_b.radio.range_m)

    def link_usable(self, a: str, b: str) -> tuple[bool, str | None]:
        link = self.link_between(a, b)
        if link is None:
            return False, "NoLink"
        if not link.up:
            return False, "LinkDown"
        if not self.in_range(a, b):
            return False, "OutOfRange"
        return True, None

    # -- sending -----------------------------------------------------------

    def _lossy_drop(self) -> bool:
        if self.config.loss_rate <= 0.0:
            return False
        return self.sim.streams.next_uniform(LOSS_STREAM) < self.config.loss_rate

    def _dispatch(self, src: str, dst: str, tag: str, payload: object,
                  size_bytes: int, latency_ms: float, transfer: str) -> DeliveryOutcome:
        usable, reason = self.link_usable(src, dst)
        if not usable:
            self._record(src, dst, tag, size_bytes, transfer, None, reason)
            return DeliveryOutcome.dropped(reason)
        if self._lossy_drop():
            self._record(src, dst, tag, size_bytes, transfer, None, "Loss")
            return DeliveryOutcome.dropped("Loss")
        radio = self.nodes[src].radio
        # Energy uses the same microsecond-rounded duration as the schedule,
        # so tx energy is exactly recomputable from the event trace.
        latency_us = ms_to_us(latency_ms)
        energy_mj = radio.tx_power_mw * latency_us / 1_000_000.0
        if self.energy_hook:
            self.energy_hook(src, "tx", energy_mj)
        at = self.sim.now + latency_us
        msg = NetMessage(src, dst, tag, payload, size_bytes, self.sim.now, transfer)
        self.sim.schedule_at(at, dst, msg)
        self._record(src, dst, tag, size_bytes, transfer, at, None)
        return DeliveryOutcome.delivered_at(at)

    def _record(self, src, dst, tag, size, transfer, at_us, drop_reason) -> None:
        rec = {"t_us": self.sim.now, "kind": "send", "src": src, "dst": dst, "tag": tag,
               "size": size, "transfer": transfer, "deliver_at_us": at_us,
               "drop": drop_reason}
        self.deliveries.append(rec)
        if self.on_event:
            self.on_event(rec)

    def send_datagram(self, d: Datagram) -> DeliveryOutcome:
        if d.src not in self.nodes:
            raise UnattachedError(d.src)
        if d.dst not in self.nodes:
            raise UnattachedError(d.dst)
        if not (1 <= d.size_bytes <= MAX_DATAGRAM_BYTES):
            raise OversizePayloadError(f"{d.size_bytes} bytes")
        radio = self.nodes[d.src].radio
        latency = radio.datagram_latency_ms(d.size_bytes)
        if self.config.datagram_jitter_ms > 0.0:
            latency += self.sim.streams.get(JITTER_STREAM).uniform(0.0, self.config.datagram_jitter_ms)
        return self._dispatch(d.src, d.dst, d.tag, d.payload, d.size_bytes, latency, "datagram")

    def send_frame(self, src: str, dst: str, payload: object,
                   size_bytes: int = FRAME_SIZE_BYTES, tag: str = "frame") -> DeliveryOutcome:
        if src not in self.nodes:
            raise UnattachedError(src)
        radio = self.nodes[src].radio
        env = radio.frame_latency
        if self.config.frame_jitter:
            latency = self.sim.streams.get(JITTER_STREAM).uniform(env.min_ms, env.max_ms)
        else:
            latency = env.decision_ms
        return self._dispatch(src, dst, tag, payload, size_bytes, latency, "frame")

    def send_bulk(self, src: str, dst: str, payload: object, size_bytes: int,
                  tag: str) -> DeliveryOutcome:
        """Size-dependent transfer on the datagram line, without the UDP cap.

        Carries multi-megabyte ledger traffic and control streams that the
        datagram op cannot (its payload bound is the measured UDP maximum).
        """
        if src not in self.nodes:
            raise UnattachedError(src)
        radio = self.nodes[src].radio
        latency = radio.datagram_latency_ms(size_bytes)
        return self._dispatch(src, dst, tag, payload, size_bytes, latency, "bulk")

    def adjacent_leaders(self, leader: str) -> list[str]:
        """Leaders reachable over an Up leader-to-leader link within range."""
        out = []
        for key in sorted(self.links):
            link = self.links[key]
            if link.kind is not LinkKind.LEADER_TO_LEADER:
                continue
            if leader not in (link.a, link.b):
                continue
            other = link.b if link.a == leader else link.a
            if link.up and self.in_range(leader, other):
                out.append(other)
        return sorted(out)

    def multicast_adjacent(self, leader: str, d: Datagram) -> list[DeliveryOutcome]:
        if self._role(leader) not in ("leader", "gateway"):
            raise NotALeaderError(leader)
        outcomes = []
        for key in sorted(self.links):
            link = self.links[key]
            if link.kind is not LinkKind.LEADER_TO_LEADER:
                continue
            if leader not in (link.a, link.b):
                continue
            other = link.b if link.a == leader else link.a
            dg = Datagram(leader, other, d.size_bytes, d.tag, d.payload)
            outcomes.append(self.send_datagram(dg))
        return outcomes
