"""Execute-order-validate pipeline: endorsing peers, ordering clients, validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

from .contracts import (
    ContractError,
    execute_invoke,
    execute_query,
    query_response_size,
)
from .kernel import Simulator, ms_to_us
from .ledger import (
    Block,
    Chain,
    IdentityRegistry,
    Transaction,
    WorldState,
    ZERO_DIGEST,
    canonical_json,
    seal_block,
    validate_block,
)
from .network import Network
from .raft import SubmitTx, SubmitReply

PROPOSE_OVERHEAD_BYTES = 512
RECEIPT_BYTES = 256

ENDORSE_TIMEOUT_MS = 1000.0
SUBMIT_RETRY_MS = 500.0
COMMIT_RETRY_MS = 4000.0
QUERY_TIMEOUT_MS = 1000.0
MAX_ENDORSE_ATTEMPTS = 3


@dataclass(frozen=True)
class ProposalRequest:
    request_id: str
    creator: str
    contract: str
    function: str
    args_json: bytes
    nonce: int
    transport_size_bytes: int


@dataclass(frozen=True)
class ProposalResponse:
    request_id: str
    peer: str
    ok: bool
    read_set: tuple = ()
    write_set: tuple = ()
    result: dict | None = None
    signature: bytes = b""
    error: str | None = None


@dataclass(frozen=True)
class QueryRequest:
    request_id: str
    contract: str
    function: str
    args_json: bytes


@dataclass(frozen=True)
class QueryReply:
    request_id: str
    ok: bool
    result: dict | None = None
    error: str | None = None


@dataclass(frozen=True)
class TxReceipt:
    tx_id: bytes
    block_number: int
    tx_index: int
    flag: str


class PeerNode:
    """Validating peer: endorses proposals, answers queries, commits blocks."""

    def __init__(self, sim: Simulator, net: Network, peer_id: str,
                 registry: IdentityRegistry, threshold: int, genesis: Block,
                 on_commit: Callable | None = None):
        self.sim = sim
        self.net = net
        self.id = peer_id
        self.registry = registry
        self.threshold = threshold
        self.chain = Chain(genesis)
        self.state = WorldState()
        self.state.apply_block(genesis)
        self._ahead: dict[int, Block] = {}
        self.on_commit = on_commit
        sim.register(peer_id, self.on_event)

    def on_event(self, msg) -> None:
        if msg.tag == "propose":
            self._endorse(msg.payload)
        elif msg.tag == "block-deliver":
            self._receive_block(msg.payload)
        elif msg.tag == "query":
            self._answer_query(msg.src, msg.payload)

    # -- execution phase ----------------------------------------------------

    def _endorse(self, req: ProposalRequest) -> None:
        try:
            execution = execute_invoke(self.state, req.contract, req.function,
                                       json.loads(req.args_json))
        except ContractError as exc:
            response = ProposalResponse(req.request_id, self.id, False,
                                        error=f"{type(exc).__name__}: {exc}")
            self._respond(req.creator, response)
            return
        draft = Transaction(req.creator, req.contract, req.function, req.args_json,
                            req.nonce, read_set=execution.read_set,
                            write_set=execution.write_set,
                            transport_size_bytes=req.transport_size_bytes)
        signature = self.registry.sign(self.id, draft.content_bytes())
        response = ProposalResponse(req.request_id, self.id, True,
                                    execution.read_set, execution.write_set,
                                    execution.result, signature)
        self._respond(req.creator, response)

    def _respond(self, dst: str, response: ProposalResponse) -> None:
        size = PROPOSE_OVERHEAD_BYTES + sum(len(v) for _k, v in response.write_set)
        self.net.send_bulk(self.id, dst, response, size, "propose-reply")

    # -- validation phase ---------------------------------------------------

    def _receive_block(self, block: Block) -> None:
        number = block.header.number
        if number <= self.chain.height:
            return  # duplicate delivery from another orderer
        self._ahead[number] = block
        while self.chain.height + 1 in self._ahead:
            self._commit(self._ahead.pop(self.chain.height + 1))

    def _commit(self, block: Block) -> None:
        flags = validate_block(block, self.state, self.registry, self.threshold)
        flagged = block.with_flags(flags)
        self.chain.append_block(flagged)
        self.state.apply_block(flagged)
        for idx, (tx, flag) in enumerate(zip(flagged.txs, flags)):
            receipt = TxReceipt(tx.tx_id, block.header.number, idx, flag)
            if self.net.link_between(self.id, tx.creator) is not None:
                self.net.send_bulk(self.id, tx.creator, receipt, RECEIPT_BYTES, "tx-receipt")
        if self.on_commit is not None:
            self.on_commit(self.id, flagged)

    # -- query path -----------------------------------------------------------

    def _answer_query(self, client: str, req: QueryRequest) -> None:
        try:
            result = execute_query(self.state, req.contract, req.function,
                                   json.loads(req.args_json))
            reply = QueryReply(req.request_id, True, result)
            size = PROPOSE_OVERHEAD_BYTES + query_response_size(
                req.contract, req.function, result)
        except ContractError as exc:
            reply = QueryReply(req.request_id, False, error=f"{type(exc).__name__}: {exc}")
            size = PROPOSE_OVERHEAD_BYTES
        self.net.send_bulk(self.id, client, reply, size, "query-reply")


@dataclass
class _Timer:
    kind: str
    request_id: str
    gen: int


@dataclass
class _InvokeState:
    contract: str
    function: str
    args_json: bytes
    transport_size_bytes: int
    callback: Callable
    nonce: int
    responses: dict = field(default_factory=dict)
    expected_peers: tuple = ()
    tx: Transaction | None = None
    orderer_cursor: int = 0
    attempts: int = 1
    gen: int = 0
    submitted_at_us: int | None = None
    done: bool = False


@dataclass
class _QueryState:
    contract: str
    function: str
    args_json: bytes
    callback: Callable
    peer_cursor: int = 0
    gen: int = 0
    done: bool = False


class LedgerClient:
    """Client-side state machine: endorse, submit, await receipt, retry.

    Owned by a network node (a big drone or an edge workstation); the owner
    routes ledger-tagged messages here. Submission is at-least-once with
    idempotent orderer acceptance; MVCC makes duplicate effects impossible.
    """

    def __init__(self, sim: Simulator, net: Network, owner: str,
                 peer_ids: list[str], orderer_ids: list[str]):
        self.sim = sim
        self.net = net
        self.owner = owner
        self.peer_ids = sorted(peer_ids)
        self.orderer_ids = sorted(orderer_ids)
        self.threshold = 2
        self._nonce = 0
        self._invokes: dict[str, _InvokeState] = {}
        self._queries: dict[str, _QueryState] = {}
        self._timer_target = f"{owner}#ledger"
        sim.register(self._timer_target, self._on_timer)

    # -- public API -----------------------------------------------------------

    def submit_invoke(self, contract: str, function: str, args: dict,
                      transport_size_bytes: int, callback: Callable) -> str:
        self._nonce += 1
        request_id = f"{self.owner}:{self._nonce}"
        state = _InvokeState(contract, function, canonical_json(args),
                             transport_size_bytes, callback, self._nonce)
        self._invokes[request_id] = state
        self._propose(request_id, state)
        return request_id

    def query(self, contract: str, function: str, args: dict, callback: Callable) -> str:
        self._nonce += 1
        request_id = f"{self.owner}:q{self._nonce}"
        state = _QueryState(contract, function, canonical_json(args), callback)
        self._queries[request_id] = state
        self._send_query(request_id, state)
        return request_id

    # -- message routing ------------------------------------------------------

    def route(self, msg) -> bool:
        """Handle a ledger-tagged NetMessage; returns False if not ours."""
        if msg.tag == "propose-reply":
            self._on_proposal_response(msg.payload)
        elif msg.tag == "submit-reply":
            self._on_submit_reply(msg.payload)
        elif msg.tag == "tx-receipt":
            self._on_receipt(msg.payload)
        elif msg.tag == "query-reply":
            self._on_query_reply(msg.payload)
        else:
            return False
        return True

    # -- endorsement ----------------------------------------------------------

    def _propose(self, request_id: str, state: _InvokeState) -> None:
        state.responses.clear()
        state.gen += 1
        req = ProposalRequest(request_id, self.owner, state.contract, state.function,
                              state.args_json, state.nonce, state.transport_size_bytes)
        reachable = []
        for peer in self.peer_ids:
            outcome = self.net.send_bulk(self.owner, peer, req,
                                         state.transport_size_bytes + PROPOSE_OVERHEAD_BYTES,
                                         "propose")
            if outcome.delivered:
                reachable.append(peer)
        state.expected_peers = tuple(reachable)
        if not reachable:
            self._endorsement_failed(request_id, state)
            return
        self._arm(request_id, "endorse", state.gen, ENDORSE_TIMEOUT_MS)

    def _on_proposal_response(self, resp: ProposalResponse) -> None:
        state = self._invokes.get(resp.request_id)
        if state is None or state.done or state.tx is not None:
            return
        state.responses[resp.peer] = resp
        # gather from every reachable peer first; the timeout path settles for
        # any group that still meets the policy threshold
        if len(state.responses) >= len(state.expected_peers):
            self._settle_endorsement(resp.request_id, state)

    def _settle_endorsement(self, request_id: str, state: _InvokeState) -> None:
        groups: dict[tuple, list[ProposalResponse]] = {}
        for peer in sorted(state.responses):
            r = state.responses[peer]
            if r.ok:
                groups.setdefault((r.read_set, r.write_set), []).append(r)
        best = None
        for (read_set, write_set), members in sorted(
                groups.items(), key=lambda kv: [m.peer for m in kv[1]]):
            if len(members) >= self.threshold:
                if best is None or len(members) > len(best[2]):
                    best = (read_set, write_set, members)
        if best is not None:
            read_set, write_set, members = best
            endorsements = tuple((m.peer, m.signature) for m in members)
            state.tx = Transaction(self.owner, state.contract, state.function,
                                   state.args_json, state.nonce,
                                   read_set=read_set, write_set=write_set,
                                   transport_size_bytes=state.transport_size_bytes,
                                   endorsements=endorsements)
            state.submitted_at_us = self.sim.now
            self._submit(request_id, state)
            return
        self._endorsement_failed(request_id, state)

    def _endorsement_failed(self, request_id: str, state: _InvokeState) -> None:
        errors = sorted(r.error for r in state.responses.values() if not r.ok)
        if errors and len(errors) == len(state.responses):
            # deterministic contract failure; retrying cannot help
            self._finish_invoke(request_id, state, ok=False, error=errors[0])
            return
        if state.attempts >= MAX_ENDORSE_ATTEMPTS:
            self._finish_invoke(request_id, state, ok=False, error="PolicyUnsatisfied")
            return
        state.attempts += 1
        self._propose(request_id, state)

    # -- ordering -------------------------------------------------------------

    def _submit(self, request_id: str, state: _InvokeState) -> None:
        state.gen += 1
        orderer = self.orderer_ids[state.orderer_cursor % len(self.orderer_ids)]
        msg = SubmitTx(state.tx, self.owner)
        self.net.send_bulk(self.owner, orderer, msg,
                           RECEIPT_BYTES + state.tx.transport_size_bytes, "raft")
        self._arm(request_id, "commit", state.gen, COMMIT_RETRY_MS)

    def _on_submit_reply(self, reply: SubmitReply) -> None:
        for request_id, state in self._invokes.items():
            if state.tx is not None and state.tx.tx_id == reply.tx_id and not state.done:
                if reply.accepted:
                    return
                state.gen += 1
                if reply.leader_hint and reply.leader_hint in self.orderer_ids:
                    state.orderer_cursor = self.orderer_ids.index(reply.leader_hint)
                    self._submit(request_id, state)
                else:
                    self._arm(request_id, "resubmit", state.gen, SUBMIT_RETRY_MS)
                return

    def _on_receipt(self, receipt: TxReceipt) -> None:
        for request_id, state in self._invokes.items():
            if state.tx is not None and state.tx.tx_id == receipt.tx_id and not state.done:
                self._finish_invoke(request_id, state, ok=True, receipt=receipt)
                return

    def _finish_invoke(self, request_id: str, state: _InvokeState, ok: bool,
                       receipt: TxReceipt | None = None, error: str | None = None) -> None:
        state.done = True
        state.gen += 1
        latency_us = None
        if receipt is not None and state.submitted_at_us is not None:
            latency_us = self.sim.now - state.submitted_at_us
        state.callback({"request_id": request_id, "ok": ok, "receipt": receipt,
                        "error": error, "tx": state.tx, "latency_us": latency_us})

    # -- queries ----------------------------------------------------------------

    def _send_query(self, request_id: str, state: _QueryState) -> None:
        if state.peer_cursor >= len(self.peer_ids):
            state.done = True
            state.callback({"request_id": request_id, "ok": False,
                            "error": "PeerUnreachable", "result": None})
            return
        peer = self.peer_ids[state.peer_cursor]
        state.gen += 1
        req = QueryRequest(request_id, state.contract, state.function, state.args_json)
        outcome = self.net.send_bulk(self.owner, peer, req,
                                     PROPOSE_OVERHEAD_BYTES + len(state.args_json),
                                     "query")
        if not outcome.delivered:
            state.peer_cursor += 1
            self._send_query(request_id, state)
            return
        self._arm(request_id, "query", state.gen, QUERY_TIMEOUT_MS)

    def _on_query_reply(self, reply: QueryReply) -> None:
        state = self._queries.get(reply.request_id)
        if state is None or state.done:
            return
        state.done = True
        state.gen += 1
        state.callback({"request_id": reply.request_id, "ok": reply.ok,
                        "result": reply.result, "error": reply.error})

    # -- timers -----------------------------------------------------------------

    def _arm(self, request_id: str, kind: str, gen: int, after_ms: float) -> None:
        self.sim.schedule_in(ms_to_us(after_ms), self._timer_target,
                             _Timer(kind, request_id, gen))

    def _on_timer(self, timer: _Timer) -> None:
        if timer.kind == "query":
            state = self._queries.get(timer.request_id)
            if state is None or state.done or state.gen != timer.gen:
                return
            state.peer_cursor += 1
            self._send_query(timer.request_id, state)
            return
        state = self._invokes.get(timer.request_id)
        if state is None or state.done or state.gen != timer.gen:
            return
        if timer.kind == "endorse":
            if state.tx is None:
                self._settle_endorsement(timer.request_id, state)
        elif timer.kind in ("commit", "resubmit"):
            state.orderer_cursor += 1
            self._submit(timer.request_id, state)


class ClientNode:
    """Standalone network node wrapping a LedgerClient (tests, edge workstation)."""

    def __init__(self, sim: Simulator, net: Network, node_id: str,
                 peer_ids: list[str], orderer_ids: list[str]):
        self.client = LedgerClient(sim, net, node_id, peer_ids, orderer_ids)
        sim.register(node_id, self.client.route)


# -- genesis ------------------------------------------------------------------

class _ScratchState:
    """WorldState look-alike used while building the genesis block."""

    def __init__(self):
        self._map: dict[str, tuple[bytes, tuple[int, int]]] = {}

    def version(self, key):
        item = self._map.get(key)
        return item[1] if item else None

    def get_value(self, key):
        item = self._map.get(key)
        return item[0] if item else None


def build_genesis(registry: IdentityRegistry, peer_ids: list[str],
                  seed_invokes: list[tuple[str, str, dict]],
                  timestamp_us: int = 0) -> Block:
    """Seed block 0: registrations executed in order, endorsed by every peer.

    Read versions follow the in-block overlay exactly, so a from-genesis
    validation replay reproduces all-valid flags.
    """
    scratch = _ScratchState()
    txs = []
    if not seed_invokes:
        # a block carries at least one tx; bootstrap with a config marker
        draft = Transaction("genesis", "config", "init", canonical_json({}), nonce=0)
        content = draft.content_bytes()
        endorsements = tuple((p, registry.sign(p, content)) for p in sorted(peer_ids))
        txs.append(Transaction(draft.creator, draft.contract, draft.function,
                               draft.args, draft.nonce, draft.kind, (), (), 0,
                               endorsements))
    for i, (contract, function, args) in enumerate(seed_invokes):
        execution = execute_invoke(scratch, contract, function, args)
        draft = Transaction("genesis", contract, function, canonical_json(args),
                            nonce=i, read_set=execution.read_set,
                            write_set=execution.write_set,
                            transport_size_bytes=len(canonical_json(args)))
        content = draft.content_bytes()
        endorsements = tuple((p, registry.sign(p, content)) for p in sorted(peer_ids))
        txs.append(Transaction(draft.creator, draft.contract, draft.function,
                               draft.args, draft.nonce, draft.kind, draft.read_set,
                               draft.write_set, draft.transport_size_bytes,
                               endorsements))
        for key, value in execution.write_set:
            scratch._map[key] = (value, (0, i))
    block = seal_block(0, ZERO_DIGEST, txs, "genesis", timestamp_us)
    return block.with_flags(["valid"] * len(txs))
