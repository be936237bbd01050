"""Deterministic Internet-of-Drones search-and-rescue simulator with an embedded permissioned ledger."""

from .kernel import Simulator, RandomStream, StreamRegistry, SimError
from .devices import (
    Battery,
    DeviceProfile,
    default_profiles,
    endurance_s,
    per_frame_latency,
    processing_energy,
)
from .network import Datagram, LinkKind, NetConfig, Network, RadioProfile
from .offload import Decision, LinkStatus, Objective, PolicyConfig, decide, select_algorithm
from .ledger import (
    Block,
    Chain,
    IdentityRegistry,
    Transaction,
    WorldState,
    merkle_root,
    verify_chain,
)

__version__ = "0.1.0"
