"""Shared harness: a boat-side ledger network without the drone fleet."""

from iodsim import contracts
from iodsim.kernel import Simulator, s_to_us
from iodsim.ledger import (
    IdentityRegistry,
    ROLE_CLIENT,
    ROLE_ORDERER,
    ROLE_PEER,
)
from iodsim.network import LinkKind, NetConfig, Network, RadioProfile
from iodsim.raft import BatchConfig, OrdererNode
from iodsim.txflow import ClientNode, PeerNode, build_genesis

DEFAULT_SEED_INVOKES = [
    (contracts.CONTRACT_TEAM, "register_team",
     {"team_id": "team-1", "location": [0.0, 1000.0], "specialists": ["medics"]}),
    (contracts.CONTRACT_TEAM, "register_team",
     {"team_id": "team-2", "location": [0.0, 3000.0], "specialists": ["divers", "medics"]}),
    (contracts.CONTRACT_HOSPITAL, "register_hospital",
     {"hospital_id": "hosp-1", "location": [0.0, 8000.0],
      "capabilities": ["emergency_rooms", "laboratories"]}),
    (contracts.CONTRACT_DRONE, "register_drone",
     {"drone_id": "drone-1", "location": [0.0, 0.0]}),
]


class LedgerWorld:
    """3 orderers + N peers + clients, fully meshed at one position."""

    def __init__(self, seed=1, n_orderers=3, n_peers=3, clients=("client-0",),
                 batch=None, seed_invokes=None, threshold=2):
        self.sim = Simulator(master_seed=seed)
        self.net = Network(self.sim, NetConfig(frame_jitter=False))
        self.orderer_ids = [f"orderer-{i}" for i in range(n_orderers)]
        self.peer_ids = [f"peer-{i}" for i in range(n_peers)]
        self.client_ids = list(clients)
        self.registry = IdentityRegistry(seed=seed)
        for oid in self.orderer_ids:
            self.registry.register(oid, ROLE_ORDERER)
        for pid in self.peer_ids:
            self.registry.register(pid, ROLE_PEER)
        for cid in self.client_ids:
            self.registry.register(cid, ROLE_CLIENT)
        self.registry.register("genesis", ROLE_CLIENT)
        invokes = DEFAULT_SEED_INVOKES if seed_invokes is None else seed_invokes
        self.genesis = build_genesis(self.registry, self.peer_ids, invokes)

        node_ids = self.orderer_ids + self.peer_ids + self.client_ids
        for node_id in node_ids:
            self.net.attach(node_id, "edge", RadioProfile(range_m=10_000.0),
                            lambda: (0.0, 0.0))
        for i, a in enumerate(node_ids):
            for b in node_ids[i + 1:]:
                self.net.add_link(a, b, LinkKind.EDGE_TO_EDGE)

        self.raft_trace = []
        self.commits = []
        self.orderers = [
            OrdererNode(self.sim, self.net, oid, self.orderer_ids, self.peer_ids,
                        self.genesis, batch or BatchConfig(), self.raft_trace)
            for oid in self.orderer_ids
        ]
        self.peers = [
            PeerNode(self.sim, self.net, pid, self.registry, threshold, self.genesis,
                     on_commit=lambda p, b: self.commits.append((self.sim.now, p, b)))
            for pid in self.peer_ids
        ]
        self.clients = {cid: ClientNode(self.sim, self.net, cid, self.peer_ids,
                                        self.orderer_ids)
                        for cid in self.client_ids}
        for orderer in self.orderers:
            orderer.start()

    def run_s(self, seconds):
        self.sim.run_until(self.sim.now + s_to_us(seconds))

    def leader(self):
        leaders = [o for o in self.orderers if o.core.role == "leader"]
        return leaders[-1] if leaders else None

    def isolate(self, node_id):
        """Down every link touching node_id."""
        for key in sorted(self.net.links):
            if node_id in key:
                self.net.set_link_state(*key, False)

    def heal(self, node_id):
        for key in sorted(self.net.links):
            if node_id in key:
                self.net.set_link_state(*key, True)

    def partition(self, group_a, group_b):
        for a in group_a:
            for b in group_b:
                if self.net.link_between(a, b) is not None:
                    self.net.set_link_state(a, b, False)

    def elections_safe(self):
        leaders_by_term = {}
        for rec in self.raft_trace:
            if rec["event"] == "became_leader":
                leaders_by_term.setdefault(rec["term"], set()).add(rec["node"])
        return all(len(nodes) == 1 for nodes in leaders_by_term.values())

    def committed_prefixes_match(self):
        chains = [[b for _t, b in o.core.log[:o.core.commit_index + 1]]
                  for o in self.orderers]
        shortest = min(len(c) for c in chains)
        for n in range(shortest):
            digests = {c[n].header.digest() for c in chains}
            if len(digests) != 1:
                return False
        return True

    def peer_states_equal(self):
        fingerprints = {p.state.fingerprint() for p in self.peers}
        heights = {p.chain.height for p in self.peers}
        return len(fingerprints) == 1 and len(heights) == 1


def invoke_and_wait(world, client_id, contract, function, args, transport=1000,
                    timeout_s=10.0):
    results = []
    world.clients[client_id].client.submit_invoke(contract, function, args,
                                                  transport, results.append)
    deadline = world.sim.now + s_to_us(timeout_s)
    while not results and world.sim.now < deadline:
        world.sim.run_until(min(deadline, world.sim.now + s_to_us(0.1)))
    return results[0] if results else None


def query_and_wait(world, client_id, contract, function, args, timeout_s=5.0):
    results = []
    world.clients[client_id].client.query(contract, function, args, results.append)
    deadline = world.sim.now + s_to_us(timeout_s)
    while not results and world.sim.now < deadline:
        world.sim.run_until(min(deadline, world.sim.now + s_to_us(0.1)))
    return results[0] if results else None
