"""Compute-board latency/power/energy models and battery accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .kernel import SimError

# Detection algorithm identifiers.
HAAR = "HaarCascades"
HOG = "HOG"
YOLOV3_TINY = "YOLOv3-tiny"
YOLOV4_TINY = "YOLOv4-tiny"
YOLOV4 = "YOLOv4"

ALL_ALGORITHMS = (HAAR, HOG, YOLOV3_TINY, YOLOV4_TINY, YOLOV4)


class NoEntryError(SimError):
    """Profile has no entry for the (algorithm, mode) pair."""


class NonPositivePowerError(SimError):
    pass


@dataclass(frozen=True)
class PowerMode:
    id: str
    budget_w: float
    cpu_cores: int


@dataclass(frozen=True)
class AlgoEntry:
    fps: float
    active_power_mw: float
    accuracy: float


@dataclass
class DeviceProfile:
    """A compute board: idle power, power modes, and per-(algorithm, mode) entries."""

    board_name: str
    idle_power_mw: float
    modes: list[PowerMode]
    default_mode: str
    entries: dict[tuple[str, str], AlgoEntry] = field(default_factory=dict)

    def entry(self, algo: str, mode: str | None = None) -> AlgoEntry:
        mode = mode or self.default_mode
        try:
            return self.entries[(algo, mode)]
        except KeyError:
            raise NoEntryError(f"{self.board_name}: no entry for {algo} @ {mode}") from None

    def algorithms(self, mode: str | None = None) -> list[str]:
        mode = mode or self.default_mode
        return [a for (a, m) in self.entries if m == mode]

    def per_frame_latency_ms(self, algo: str, mode: str | None = None) -> float:
        return 1000.0 / self.entry(algo, mode).fps

    def processing_energy_mj(self, algo: str, mode: str | None = None) -> float:
        e = self.entry(algo, mode)
        return e.active_power_mw * (1000.0 / e.fps) / 1000.0


def per_frame_latency(profile: DeviceProfile, algo: str, mode: str | None = None) -> float:
    return profile.per_frame_latency_ms(algo, mode)


def processing_energy(profile: DeviceProfile, algo: str, mode: str | None = None) -> float:
    return profile.processing_energy_mj(algo, mode)


@dataclass
class DrainResult:
    drained_mj: float
    low_battery_crossed: bool
    depleted: bool


class Battery:
    """Energy store in millijoules. drain() is the only mutation path."""

    def __init__(self, capacity_mj: float, low_threshold_fraction: float = 0.2):
        if not (0.0 < low_threshold_fraction < 1.0) and math.isfinite(capacity_mj):
            raise ValueError("low_threshold_fraction must be in (0, 1)")
        self.capacity_mj = capacity_mj
        self.remaining_mj = capacity_mj
        self.low_threshold_fraction = low_threshold_fraction
        self.total_drained_mj = 0.0
        self.swaps = 0

    @property
    def depleted(self) -> bool:
        return self.remaining_mj <= 0.0

    @property
    def fraction(self) -> float:
        if math.isinf(self.capacity_mj):
            return 1.0
        return self.remaining_mj / self.capacity_mj

    def drain(self, energy_mj: float) -> DrainResult:
        if energy_mj < 0:
            raise ValueError("drain energy must be >= 0")
        if math.isinf(self.capacity_mj):
            self.total_drained_mj += energy_mj
            return DrainResult(energy_mj, False, False)
        threshold = self.capacity_mj * self.low_threshold_fraction
        was_above = self.remaining_mj > threshold
        actual = min(energy_mj, self.remaining_mj)
        self.remaining_mj -= actual
        self.total_drained_mj += actual
        crossed = was_above and self.remaining_mj <= threshold
        return DrainResult(actual, crossed, self.remaining_mj <= 0.0)

    def swap(self) -> None:
        """Battery replacement at the boat: remaining back to full, history kept."""
        self.remaining_mj = self.capacity_mj
        self.swaps += 1


def endurance_s(battery: Battery, steady_power_w: float) -> float:
    if steady_power_w <= 0:
        raise NonPositivePowerError(f"steady power {steady_power_w} W")
    return battery.remaining_mj / (steady_power_w * 1000.0)


@dataclass
class HardwareSpec:
    """Board + airframe bundle used to instantiate a node."""

    board: DeviceProfile
    battery_capacity_mj: float
    hover_power_w: float
    storage_capacity_bytes: int


# Default detection accuracies are not measured in the source tables; they are
# configurable assumptions used only for policy thresholds.
DEFAULT_ACCURACY = {
    HAAR: 0.55,
    HOG: 0.65,
    YOLOV3_TINY: 0.80,
    YOLOV4_TINY: 0.85,
    YOLOV4: 0.92,
}

INTEL_UP_MODE = "default"
JETSON_MODE_10W_4C = "10W/4core"
JETSON_MODE_15W_4C = "15W/4core"
JETSON_MODE_15W_6C = "15W/6core"

# Small-drone battery: 5500 mAh at 14.8 V.
SMALL_DRONE_BATTERY_MJ = 5.5 * 14.8 * 3600.0 * 1000.0
# Big-drone capacity chosen so a 1500 W hover load yields the measured
# 20-minute endurance.
BIG_DRONE_HOVER_W = 1500.0
BIG_DRONE_BATTERY_MJ = BIG_DRONE_HOVER_W * 1200.0 * 1000.0
# Small-drone hover power is an assumption (~16 min endurance on the stock pack).
SMALL_DRONE_HOVER_W = 300.0


def intel_up_profile() -> DeviceProfile:
    mode = INTEL_UP_MODE
    entries = {
        (HAAR, mode): AlgoEntry(fps=3.7, active_power_mw=7710.0, accuracy=DEFAULT_ACCURACY[HAAR]),
        (HOG, mode): AlgoEntry(fps=3.3, active_power_mw=7790.0, accuracy=DEFAULT_ACCURACY[HOG]),
        (YOLOV3_TINY, mode): AlgoEntry(fps=1.4, active_power_mw=7840.0, accuracy=DEFAULT_ACCURACY[YOLOV3_TINY]),
    }
    return DeviceProfile(
        board_name="intel-up-squared",
        idle_power_mw=3100.0,
        modes=[PowerMode(mode, 10.0, 4)],
        default_mode=mode,
        entries=entries,
    )


def jetson_xavier_nx_profile() -> DeviceProfile:
    modes = [
        PowerMode(JETSON_MODE_10W_4C, 10.0, 4),
        PowerMode(JETSON_MODE_15W_4C, 15.0, 4),
        PowerMode(JETSON_MODE_15W_6C, 15.0, 6),
    ]
    fps = {
        YOLOV3_TINY: {JETSON_MODE_10W_4C: 53.2, JETSON_MODE_15W_4C: 61.8, JETSON_MODE_15W_6C: 67.8},
        YOLOV4_TINY: {JETSON_MODE_10W_4C: 48.3, JETSON_MODE_15W_4C: 57.5, JETSON_MODE_15W_6C: 61.3},
        YOLOV4: {JETSON_MODE_10W_4C: 4.7, JETSON_MODE_15W_4C: 4.7, JETSON_MODE_15W_6C: 4.7},
    }
    # Measured active power exists for 10W/4core and 15W/6core; the 15W/4core
    # figure is the nominal budget (assumption, no measurement available).
    power = {
        JETSON_MODE_10W_4C: 13110.0,
        JETSON_MODE_15W_4C: 15000.0,
        JETSON_MODE_15W_6C: 18620.0,
    }
    entries = {}
    for algo, per_mode in fps.items():
        for mode, f in per_mode.items():
            entries[(algo, mode)] = AlgoEntry(f, power[mode], DEFAULT_ACCURACY[algo])
    return DeviceProfile(
        board_name="jetson-xavier-nx",
        idle_power_mw=4655.0,
        modes=modes,
        default_mode=JETSON_MODE_10W_4C,
        entries=entries,
    )


def edge_server_profile() -> DeviceProfile:
    """Boat edge server: powered from the boat, no detection table simulated."""
    mode = "default"
    return DeviceProfile(
        board_name="edge-server",
        idle_power_mw=0.0,
        modes=[PowerMode(mode, 0.0, 8)],
        default_mode=mode,
        entries={},
    )


def default_profiles() -> dict[str, HardwareSpec]:
    return {
        "small_drone": HardwareSpec(
            board=intel_up_profile(),
            battery_capacity_mj=SMALL_DRONE_BATTERY_MJ,
            hover_power_w=SMALL_DRONE_HOVER_W,
            storage_capacity_bytes=32 * 10**9,
        ),
        "big_drone": HardwareSpec(
            board=jetson_xavier_nx_profile(),
            battery_capacity_mj=BIG_DRONE_BATTERY_MJ,
            hover_power_w=BIG_DRONE_HOVER_W,
            storage_capacity_bytes=256 * 10**9,
        ),
        "edge": HardwareSpec(
            board=edge_server_profile(),
            battery_capacity_mj=math.inf,
            hover_power_w=0.0,
            storage_capacity_bytes=4 * 10**12,
        ),
    }
