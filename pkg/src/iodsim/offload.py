"""Per-frame offloading decisions: local processing vs offload vs store."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .devices import DeviceProfile
from .kernel import SimError
from .network import FRAME_DECISION_MS, RadioProfile, TX_POWER_MW

RESULT_DATAGRAM_BYTES = 10_000


class NoFeasibleActionError(SimError):
    """Link down, local processing infeasible, and no storage headroom."""


class Objective(Enum):
    MINIMIZE_ENERGY = "minimize_energy"
    MINIMIZE_LATENCY = "minimize_latency"
    LEX_ENERGY_THEN_LATENCY = "lex_energy_latency"


# Specific-rule vocabulary; rules outrank the general comparison.
CONDITIONS = ("on_link_down", "on_low_battery", "on_storage_full")
RULE_ACTIONS = ("local", "store", "drop")

LOCAL = "local"
OFFLOAD = "offload"
STORE = "store"
DROP = "drop"


@dataclass(frozen=True)
class SpecificRule:
    condition: str
    action: str

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        if self.action not in RULE_ACTIONS:
            raise ValueError(f"unknown rule action {self.action!r}")


@dataclass
class PolicyConfig:
    objective: Objective = Objective.LEX_ENERGY_THEN_LATENCY
    min_accuracy: float = 0.90
    max_latency_ms: float = 500.0
    rules: list[SpecificRule] = field(default_factory=lambda: [SpecificRule("on_link_down", "store")])


@dataclass(frozen=True)
class LinkStatus:
    """Network parameters in force for one decision."""

    up: bool
    frame_decision_ms: float = FRAME_DECISION_MS
    tx_power_mw: float = TX_POWER_MW
    result_tx_ms: float = 3.7  # 10 kB detection summary on the datagram line

    @staticmethod
    def from_radio(radio: RadioProfile, up: bool) -> "LinkStatus":
        return LinkStatus(
            up=up,
            frame_decision_ms=radio.frame_latency.decision_ms,
            tx_power_mw=radio.tx_power_mw,
            result_tx_ms=radio.datagram_latency_ms(RESULT_DATAGRAM_BYTES),
        )


@dataclass(frozen=True)
class NodeFlags:
    low_battery: bool = False
    storage_full: bool = False


@dataclass
class Predicted:
    local_latency_ms: float | None = None
    local_energy_mj: float | None = None
    offload_latency_ms: float | None = None
    offload_energy_mj: float | None = None


@dataclass
class Decision:
    action: str  # local | offload | store | drop
    algorithm: str | None  # set for local
    offload_algorithm: str | None
    predicted: Predicted
    rule: str | None = None  # condition of the specific rule that fired, if any


def select_algorithm(candidates: list[str], cfg: PolicyConfig,
                     device: DeviceProfile, mode: str | None = None) -> str | None:
    """Highest-accuracy algorithm meeting both accuracy and latency bounds.

    Ties break toward lower latency, then name for stability. None when the
    feasible set is empty.
    """
    feasible = []
    for algo in candidates:
        entry = device.entry(algo, mode)
        latency = device.per_frame_latency_ms(algo, mode)
        if entry.accuracy >= cfg.min_accuracy and latency <= cfg.max_latency_ms:
            feasible.append((-entry.accuracy, latency, algo))
    if not feasible:
        return None
    feasible.sort()
    return feasible[0][2]


def _best_local(small: DeviceProfile, mode: str | None, cfg: PolicyConfig) -> str | None:
    return select_algorithm(small.algorithms(mode), cfg, small, mode)


def _any_local(small: DeviceProfile, mode: str | None) -> str | None:
    """Most accurate algorithm regardless of policy bounds (forced-local rule)."""
    algos = small.algorithms(mode)
    if not algos:
        return None
    ranked = sorted(
        ((-small.entry(a, mode).accuracy, small.per_frame_latency_ms(a, mode), a) for a in algos)
    )
    return ranked[0][2]


def decide(small: DeviceProfile, big: DeviceProfile, link: LinkStatus, cfg: PolicyConfig,
           flags: NodeFlags = NodeFlags(), small_mode: str | None = None,
           big_mode: str | None = None) -> Decision:
    """Pick local / offload / store for one captured frame.

    Specific rules fire first, in order. The general comparison predicts both
    branches with the parameters actually in force: the local branch is the
    best feasible small-drone algorithm (energy includes shipping the 10 kB
    result), the offload branch is the planning frame latency plus the big
    drone's per-frame latency (energy is the frame transmission). Exact ties
    resolve to offload, the flight-time-extending choice.
    """
    local_algo = _best_local(small, small_mode, cfg)
    big_algo = select_algorithm(big.algorithms(big_mode), cfg, big, big_mode)

    predicted = Predicted()
    if local_algo is not None:
        predicted.local_latency_ms = small.per_frame_latency_ms(local_algo, small_mode)
        predicted.local_energy_mj = (
            small.processing_energy_mj(local_algo, small_mode)
            + link.tx_power_mw * link.result_tx_ms / 1000.0
        )
    if big_algo is not None:
        predicted.offload_latency_ms = link.frame_decision_ms + big.per_frame_latency_ms(big_algo, big_mode)
        predicted.offload_energy_mj = link.tx_power_mw * link.frame_decision_ms / 1000.0

    active = {
        "on_link_down": not link.up,
        "on_low_battery": flags.low_battery,
        "on_storage_full": flags.storage_full,
    }
    for rule in cfg.rules:
        if not active[rule.condition]:
            continue
        if rule.action == STORE and flags.storage_full:
            continue  # unsatisfiable, try the next rule
        if rule.action == LOCAL:
            forced = local_algo or _any_local(small, small_mode)
            if forced is None:
                continue
            return Decision(LOCAL, forced, big_algo, predicted, rule=rule.condition)
        return Decision(rule.action, None, big_algo, predicted, rule=rule.condition)

    offload_ok = link.up and big_algo is not None
    local_ok = local_algo is not None

    if not offload_ok and not local_ok:
        if flags.storage_full:
            raise NoFeasibleActionError("link down, no feasible local algorithm, storage full")
        return Decision(STORE, None, big_algo, predicted)
    if not offload_ok:
        return Decision(LOCAL, local_algo, big_algo, predicted)
    if not local_ok:
        return Decision(OFFLOAD, None, big_algo, predicted)

    if cfg.objective is Objective.MINIMIZE_ENERGY:
        local_key = (predicted.local_energy_mj,)
        offload_key = (predicted.offload_energy_mj,)
    elif cfg.objective is Objective.MINIMIZE_LATENCY:
        local_key = (predicted.local_latency_ms,)
        offload_key = (predicted.offload_latency_ms,)
    else:
        local_key = (predicted.local_energy_mj, predicted.local_latency_ms)
        offload_key = (predicted.offload_energy_mj, predicted.offload_latency_ms)

    if offload_key <= local_key:
        return Decision(OFFLOAD, None, big_algo, predicted)
    return Decision(LOCAL, local_algo, big_algo, predicted)
