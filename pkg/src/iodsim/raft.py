"""Raft consensus among orderers, plus batch-driven block cutting."""

from __future__ import annotations

from dataclasses import dataclass

from .kernel import RandomStream, Simulator, ms_to_us
from .ledger import Block, Transaction, TX_OVERHEAD_BYTES, seal_block
from .network import Network

FOLLOWER = "follower"
CANDIDATE = "candidate"
LEADER = "leader"

ELECTION_TIMEOUT_MS = (150.0, 300.0)
HEARTBEAT_INTERVAL_MS = 50.0
# an unacknowledged entries transfer is retried after this long
REPLICATION_RESEND_MS = 500.0
RAFT_MSG_BYTES = 256
ELECTION_STREAM = "raft-election"


@dataclass(frozen=True)
class BatchConfig:
    timeout_ms: int = 2000
    max_messages: int = 10
    max_bytes: int = 99_000_000


@dataclass(frozen=True)
class RequestVote:
    term: int
    candidate: str
    last_log_index: int
    last_log_term: int


@dataclass(frozen=True)
class VoteReply:
    term: int
    voter: str
    granted: bool


@dataclass(frozen=True)
class AppendEntries:
    term: int
    leader: str
    prev_index: int
    prev_term: int
    entries: tuple  # ((term, Block), ...)
    leader_commit: int


@dataclass(frozen=True)
class AppendReply:
    term: int
    follower: str
    ok: bool
    match_index: int
    hint_index: int = -1  # follower's last log index, set on rejection


@dataclass(frozen=True)
class SubmitTx:
    tx: Transaction
    client: str


@dataclass(frozen=True)
class SubmitReply:
    tx_id: bytes
    accepted: bool
    leader_hint: str | None


# Effects returned by the core for the host to enact:
#   ("send", dst, msg)            outbound message
#   ("election_check", at_us)     (re)arm the election timer
#   ("cut_check", at_us)          arm the batch timeout timer
#   ("heartbeat_start",)          node became leader; start the tick train
#   ("commit", block)             block newly committed at this node


class RaftCore:
    """Single orderer's Raft state machine. Pure: fed messages, returns effects.

    The replicated entries are sealed blocks; block number equals log index
    and the genesis block occupies index 0 on every node.
    """

    def __init__(self, node_id: str, orderer_ids: list[str], genesis: Block,
                 stream: RandomStream, batch: BatchConfig | None = None,
                 trace: list | None = None):
        self.id = node_id
        self.others = sorted(o for o in orderer_ids if o != node_id)
        self.cluster_size = len(self.others) + 1
        self.stream = stream
        self.batch = batch or BatchConfig()
        self.trace = trace if trace is not None else []

        self.role = FOLLOWER
        self.current_term = 0
        self.voted_for: str | None = None
        self.log: list[tuple[int, Block]] = [(0, genesis)]
        self.commit_index = 0
        self.known_leader: str | None = None
        self.election_deadline_us = 0

        self._votes: set[str] = set()
        self.next_index: dict[str, int] = {}
        self.match_index: dict[str, int] = {}
        # follower -> time an entries message went out, awaiting its reply
        self._inflight: dict[str, int] = {}

        self.pending: list[tuple[int, Transaction]] = []
        self.pending_bytes = 0
        self._pending_ids: set[bytes] = set()
        self.committed_tx_ids: set[bytes] = set()
        for tx in genesis.txs:
            self.committed_tx_ids.add(tx.tx_id)

    # -- bookkeeping ---------------------------------------------------------

    def _note(self, now: int, event: str, **fields) -> None:
        rec = {"t_us": now, "node": self.id, "event": event, "term": self.current_term}
        rec.update(fields)
        self.trace.append(rec)

    def majority(self) -> int:
        return self.cluster_size // 2 + 1

    def last_log(self) -> tuple[int, int]:
        index = len(self.log) - 1
        return index, self.log[index][0]

    def reset_election_deadline(self, now: int) -> list:
        timeout_ms = self.stream.uniform(*ELECTION_TIMEOUT_MS)
        self.election_deadline_us = now + ms_to_us(timeout_ms)
        return [("election_check", self.election_deadline_us)]

    def _become_follower(self, term: int, now: int) -> None:
        was = self.role
        if term > self.current_term:
            self.current_term = term
            self.voted_for = None
            self._note(now, "term")
        if was == LEADER:
            # uncommitted batch is lost; clients re-submit
            self.pending.clear()
            self.pending_bytes = 0
            self._pending_ids.clear()
        if was != FOLLOWER:
            self._note(now, "became_follower")
        self.role = FOLLOWER

    # -- elections -----------------------------------------------------------

    def on_election_check(self, now: int) -> list:
        if self.role == LEADER or now < self.election_deadline_us:
            return []
        return self.start_election(now)

    def start_election(self, now: int) -> list:
        self.current_term += 1
        self.role = CANDIDATE
        self.voted_for = self.id
        self._votes = {self.id}
        self.known_leader = None
        self._note(now, "became_candidate")
        effects = self.reset_election_deadline(now)
        if len(self._votes) >= self.majority():
            return effects + self._become_leader(now)
        last_index, last_term = self.last_log()
        for other in self.others:
            effects.append(("send", other, RequestVote(self.current_term, self.id,
                                                       last_index, last_term)))
        return effects

    def on_request_vote(self, m: RequestVote, now: int) -> list:
        effects = []
        if m.term > self.current_term:
            self._become_follower(m.term, now)
        granted = False
        if m.term == self.current_term and self.voted_for in (None, m.candidate):
            last_index, last_term = self.last_log()
            up_to_date = (m.last_log_term, m.last_log_index) >= (last_term, last_index)
            if up_to_date:
                granted = True
                self.voted_for = m.candidate
                self._note(now, "vote", granted_to=m.candidate)
                effects += self.reset_election_deadline(now)
        effects.append(("send", m.candidate, VoteReply(self.current_term, self.id, granted)))
        return effects

    def on_vote_reply(self, m: VoteReply, now: int) -> list:
        if m.term > self.current_term:
            self._become_follower(m.term, now)
            return self.reset_election_deadline(now)
        if self.role != CANDIDATE or m.term != self.current_term or not m.granted:
            return []
        self._votes.add(m.voter)
        if len(self._votes) >= self.majority():
            return self._become_leader(now)
        return []

    def _become_leader(self, now: int) -> list:
        self.role = LEADER
        self.known_leader = self.id
        self.next_index = {o: len(self.log) for o in self.others}
        self.match_index = {o: 0 for o in self.others}
        self._inflight = {}
        self._note(now, "became_leader")
        effects = [("heartbeat_start",)]
        effects += [("send", o, self._heartbeat_for(o)) for o in self.others]
        # a single-node cluster commits on append; re-check now
        effects += self._advance_commit(now)
        return effects

    # -- replication ---------------------------------------------------------
    #
    # Heartbeats stay empty so a multi-megabyte entries transfer in flight can
    # never starve a follower's election deadline; they probe at next_index-1
    # like standard AppendEntries, so a lagging follower is discovered even on
    # an idle log. Entry replication rides its own messages, one outstanding
    # per follower, retried after REPLICATION_RESEND_MS.

    def _heartbeat_for(self, follower: str) -> AppendEntries:
        probe = self.next_index[follower] - 1
        return AppendEntries(self.current_term, self.id, probe,
                             self.log[probe][0], (), self.commit_index)

    def _entries_for(self, follower: str) -> AppendEntries:
        nxt = self.next_index[follower]
        prev_index = nxt - 1
        prev_term = self.log[prev_index][0]
        entries = tuple(self.log[nxt:])
        return AppendEntries(self.current_term, self.id, prev_index, prev_term,
                             entries, self.commit_index)

    def _replicate_to(self, follower: str, now: int) -> list:
        if self.next_index[follower] >= len(self.log):
            return []
        self._inflight[follower] = now
        return [("send", follower, self._entries_for(follower))]

    def _broadcast_append(self, now: int) -> list:
        effects = []
        for o in self.others:
            effects += self._replicate_to(o, now)
        return effects

    def on_heartbeat_tick(self, now: int) -> list:
        if self.role != LEADER:
            return []
        effects = [("send", o, self._heartbeat_for(o)) for o in self.others]
        resend_after = ms_to_us(REPLICATION_RESEND_MS)
        for o in self.others:
            if self.next_index[o] >= len(self.log):
                continue
            sent_at = self._inflight.get(o)
            if sent_at is None or now - sent_at >= resend_after:
                effects += self._replicate_to(o, now)
        return effects

    def on_append_entries(self, m: AppendEntries, now: int) -> list:
        if m.term < self.current_term:
            return [("send", m.leader, AppendReply(self.current_term, self.id, False, 0))]
        self._become_follower(m.term, now)
        self.known_leader = m.leader
        effects = self.reset_election_deadline(now)
        if m.prev_index >= len(self.log) or self.log[m.prev_index][0] != m.prev_term:
            effects.append(("send", m.leader,
                            AppendReply(self.current_term, self.id, False, 0,
                                        hint_index=len(self.log) - 1)))
            return effects
        # splice: drop conflicting suffix, append the rest
        insert_at = m.prev_index + 1
        for i, entry in enumerate(m.entries):
            idx = insert_at + i
            if idx < len(self.log) and self.log[idx][0] == entry[0]:
                continue
            del self.log[idx:]
            self.log.extend(m.entries[i:])
            break
        match = m.prev_index + len(m.entries)
        if m.leader_commit > self.commit_index:
            # cap at the last position this message verified; entries past it
            # may be a divergent leftover tail
            new_commit = min(m.leader_commit, match)
            if new_commit > self.commit_index:
                effects += self._commit_to(new_commit, now)
        effects.append(("send", m.leader,
                        AppendReply(self.current_term, self.id, True, match)))
        return effects

    def on_append_reply(self, m: AppendReply, now: int) -> list:
        if m.term > self.current_term:
            self._become_follower(m.term, now)
            return self.reset_election_deadline(now)
        if self.role != LEADER or m.term != self.current_term:
            return []
        if not m.ok:
            if m.follower in self._inflight:
                # an entries transfer is pending; this is a heartbeat probe
                # racing ahead of it, not new information
                return []
            nxt = self.next_index[m.follower] - 1
            if m.hint_index >= 0:
                nxt = min(nxt, m.hint_index + 1)
            self.next_index[m.follower] = max(1, nxt)
            return self._replicate_to(m.follower, now)
        if m.match_index > self.match_index[m.follower]:
            self._inflight.pop(m.follower, None)
            self.match_index[m.follower] = m.match_index
            self.next_index[m.follower] = m.match_index + 1
        effects = self._replicate_to(m.follower, now) \
            if m.follower not in self._inflight else []
        return effects + self._advance_commit(now)

    def _advance_commit(self, now: int) -> list:
        if self.role != LEADER:
            return []
        effects = []
        for n in range(len(self.log) - 1, self.commit_index, -1):
            if self.log[n][0] != self.current_term:
                break
            replicas = 1 + sum(1 for o in self.others if self.match_index[o] >= n)
            if replicas >= self.majority():
                effects += self._commit_to(n, now)
                break
        return effects

    def _commit_to(self, new_commit: int, now: int) -> list:
        effects = []
        while self.commit_index < new_commit:
            self.commit_index += 1
            _term, block = self.log[self.commit_index]
            for tx in block.txs:
                self.committed_tx_ids.add(tx.tx_id)
                self._pending_ids.discard(tx.tx_id)
            self._note(now, "commit", index=self.commit_index,
                       block_hash=block.header.digest().hex())
            effects.append(("commit", block))
        return effects

    # -- block cutting ------------------------------------------------------

    def on_submit(self, m: SubmitTx, now: int) -> list:
        tx = m.tx
        if self.role != LEADER:
            return [("send", m.client, SubmitReply(tx.tx_id, False, self.known_leader))]
        reply = [("send", m.client, SubmitReply(tx.tx_id, True, self.id))]
        if tx.tx_id in self._pending_ids or tx.tx_id in self.committed_tx_ids:
            return reply  # idempotent re-submission
        effects = []
        size = tx.transport_size_bytes + TX_OVERHEAD_BYTES
        if self.pending and self.pending_bytes + size > self.batch.max_bytes:
            effects += self.cut_block(now)
        self.pending.append((now, tx))
        self.pending_bytes += size
        self._pending_ids.add(tx.tx_id)
        if len(self.pending) >= self.batch.max_messages:
            effects += self.cut_block(now)
        elif len(self.pending) == 1:
            effects.append(("cut_check", now + ms_to_us(self.batch.timeout_ms)))
        return reply + effects

    def on_cut_check(self, now: int) -> list:
        if self.role != LEADER or not self.pending:
            return []
        oldest = self.pending[0][0]
        if now - oldest >= ms_to_us(self.batch.timeout_ms):
            return self.cut_block(now)
        return [("cut_check", oldest + ms_to_us(self.batch.timeout_ms))]

    def cut_block(self, now: int) -> list:
        if not self.pending:
            return []
        txs = [tx for _, tx in self.pending]
        self.pending.clear()
        self.pending_bytes = 0
        number = len(self.log)
        prev_hash = self.log[-1][1].header.digest()
        block = seal_block(number, prev_hash, txs, self.id, now)
        self.log.append((self.current_term, block))
        self._note(now, "cut", index=number, txs=len(txs))
        effects = self._broadcast_append(now)
        effects += self._advance_commit(now)  # single-node commits immediately
        return effects

    def step(self, msg, now: int) -> list:
        """Dispatch one message or timer; returns the effects to enact."""
        if isinstance(msg, RequestVote):
            return self.on_request_vote(msg, now)
        if isinstance(msg, VoteReply):
            return self.on_vote_reply(msg, now)
        if isinstance(msg, AppendEntries):
            return self.on_append_entries(msg, now)
        if isinstance(msg, AppendReply):
            return self.on_append_reply(msg, now)
        if isinstance(msg, SubmitTx):
            return self.on_submit(msg, now)
        raise TypeError(f"unknown raft message {type(msg).__name__}")

    def committed_blocks(self) -> list[Block]:
        return [block for _term, block in self.log[:self.commit_index + 1]]


@dataclass
class _Timer:
    kind: str
    guard: object = None


def message_size(msg) -> int:
    if isinstance(msg, AppendEntries):
        return RAFT_MSG_BYTES + sum(b.transport_size_bytes for _t, b in msg.entries)
    if isinstance(msg, SubmitTx):
        return RAFT_MSG_BYTES + msg.tx.transport_size_bytes + TX_OVERHEAD_BYTES
    return RAFT_MSG_BYTES


class OrdererNode:
    """Kernel/netsim host for one RaftCore: timers, transport, block delivery."""

    def __init__(self, sim: Simulator, net: Network, node_id: str,
                 orderer_ids: list[str], peer_ids: list[str], genesis: Block,
                 batch: BatchConfig | None = None, trace: list | None = None):
        self.sim = sim
        self.net = net
        self.id = node_id
        self.peer_ids = sorted(peer_ids)
        stream = sim.streams.register(ELECTION_STREAM)
        self.core = RaftCore(node_id, orderer_ids, genesis, stream, batch, trace)
        self.delivered_through = 0  # blocks forwarded to peers so far
        sim.register(node_id, self.on_event)

    def start(self) -> None:
        self._enact(self.core.reset_election_deadline(self.sim.now))

    def on_event(self, payload) -> None:
        now = self.sim.now
        if isinstance(payload, _Timer):
            core = self.core
            if payload.kind == "election":
                if core.election_deadline_us == payload.guard:
                    self._enact(core.on_election_check(now))
            elif payload.kind == "heartbeat":
                if core.role == LEADER and core.current_term == payload.guard:
                    self._enact(core.on_heartbeat_tick(now))
                    self._schedule_heartbeat(payload.guard)
            elif payload.kind == "cut":
                self._enact(core.on_cut_check(now))
            return
        # NetMessage with a raft payload
        self._enact(self.core.step(payload.payload, now))

    def submit(self, tx: Transaction, client: str) -> None:
        """Local injection path used by tests; network clients send SubmitTx."""
        self._enact(self.core.on_submit(SubmitTx(tx, client), self.sim.now))

    def _schedule_heartbeat(self, term: int) -> None:
        self.sim.schedule_in(ms_to_us(HEARTBEAT_INTERVAL_MS), self.id, _Timer("heartbeat", term))

    def _enact(self, effects: list) -> None:
        for effect in effects:
            kind = effect[0]
            if kind == "send":
                _kind, dst, msg = effect
                tag = "submit-reply" if isinstance(msg, SubmitReply) else "raft"
                self.net.send_bulk(self.id, dst, msg, message_size(msg), tag)
            elif kind == "election_check":
                self.sim.schedule_at(effect[1], self.id, _Timer("election", effect[1]))
            elif kind == "cut_check":
                self.sim.schedule_at(effect[1], self.id, _Timer("cut", effect[1]))
            elif kind == "heartbeat_start":
                self._schedule_heartbeat(self.core.current_term)
            elif kind == "commit":
                self._deliver(effect[1])

    def _deliver(self, block: Block) -> None:
        for peer in self.peer_ids:
            self.net.send_bulk(self.id, peer, block, block.transport_size_bytes,
                               "block-deliver")
