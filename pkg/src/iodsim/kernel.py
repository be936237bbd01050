"""Deterministic discrete-event kernel: virtual clock, event queue, seeded streams."""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

US_PER_MS = 1_000
US_PER_S = 1_000_000


def ms_to_us(ms: float) -> int:
    """Convert milliseconds to integer microseconds (round half away from clock drift)."""
    return round(ms * US_PER_MS)


def s_to_us(s: float) -> int:
    return round(s * US_PER_S)


def us_to_ms(us: int) -> float:
    return us / US_PER_MS


def us_to_s(us: int) -> float:
    return us / US_PER_S


class SimError(Exception):
    """Base class for simulation errors."""


class PastTimeError(SimError):
    """Event scheduled before the current clock."""


class UnknownStreamError(SimError):
    """Random stream used before registration."""


class UnknownTargetError(SimError):
    """Event addressed to a target with no registered handler."""


@dataclass(order=True)
class Event:
    fire_at: int
    seq: int
    target: str = field(compare=False)
    payload: Any = field(compare=False)


# SplitMix64 constants (Steele, Lea & Flood; public-domain reference algorithm).
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


class RandomStream:
    """SplitMix64 stream seeded from (master_seed, stream_key).

    The algorithm is fixed and documented so the same (seed, key) pair yields
    the same sequence in any implementation: state advances by the golden
    gamma and each output is the standard two-round mix of the new state.
    """

    def __init__(self, master_seed: int, key: str):
        self.key = key
        material = f"{master_seed}:{key}".encode()
        self._state = int.from_bytes(hashlib.sha256(material).digest()[:8], "big")
        self.draws = 0

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        self.draws += 1
        return z ^ (z >> 31)

    def next_uniform(self) -> float:
        # 53-bit mantissa, uniform on [0, 1)
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_uniform()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + self.next_u64() % (hi - lo + 1)


class StreamRegistry:
    """Named random streams, isolated from each other by construction."""

    def __init__(self, master_seed: int):
        self.master_seed = master_seed
        self._streams: dict[str, RandomStream] = {}

    def register(self, key: str) -> RandomStream:
        if key not in self._streams:
            self._streams[key] = RandomStream(self.master_seed, key)
        return self._streams[key]

    def get(self, key: str) -> RandomStream:
        try:
            return self._streams[key]
        except KeyError:
            raise UnknownStreamError(key) from None

    def next_uniform(self, key: str) -> float:
        return self.get(key).next_uniform()


class Simulator:
    """Single-timeline event scheduler.

    Events are totally ordered by (fire_at, seq) where seq is the insertion
    ordinal, so replays of the same scenario are exact. Handlers are looked
    up by target name at fire time.
    """

    def __init__(self, master_seed: int = 0):
        self.now: int = 0
        self.streams = StreamRegistry(master_seed)
        self._heap: list[Event] = []
        self._seq = 0
        self._handlers: dict[str, Callable[[Any], None]] = {}
        self.processed = 0
        self.trace_hook: Callable[[Event], None] | None = None

    def register(self, target: str, handler: Callable[[Any], None]) -> None:
        self._handlers[target] = handler

    def schedule_at(self, fire_at: int, target: str, payload: Any) -> int:
        if fire_at < self.now:
            raise PastTimeError(f"fire_at {fire_at} < clock {self.now}")
        ev = Event(fire_at, self._seq, target, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev.seq

    def schedule_in(self, delay_us: int, target: str, payload: Any) -> int:
        return self.schedule_at(self.now + delay_us, target, payload)

    def _fire(self, ev: Event) -> None:
        self.now = ev.fire_at
        if self.trace_hook is not None:
            self.trace_hook(ev)
        handler = self._handlers.get(ev.target)
        if handler is None:
            raise UnknownTargetError(ev.target)
        handler(ev.payload)
        self.processed += 1

    def run_until(self, t: int) -> int:
        """Process every event with fire_at <= t in order; leave the clock at t."""
        if t < self.now:
            raise PastTimeError(f"run_until {t} < clock {self.now}")
        count = 0
        while self._heap and self._heap[0].fire_at <= t:
            self._fire(heapq.heappop(self._heap))
            count += 1
        self.now = t
        return count

    def run_until_empty(self, cap: int) -> int:
        """Drain the queue up to the cap time; the clock stops at the last event or cap."""
        count = 0
        while self._heap and self._heap[0].fire_at <= cap:
            self._fire(heapq.heappop(self._heap))
            count += 1
        return count

    def pending(self) -> int:
        return len(self._heap)
