"""Blockchain core: hash-chained blocks, Merkle roots, world state, identities."""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass, replace

from .kernel import SimError

DIGEST_SIZE = 32
ZERO_DIGEST = b"\x00" * DIGEST_SIZE

INVOKE = "invoke"
QUERY = "query"

VALID = "valid"
INVALID_VERSION_CONFLICT = "invalid_version_conflict"
INVALID_ENDORSEMENT = "invalid_endorsement"
FLAG_CODES = {VALID: 0, INVALID_VERSION_CONFLICT: 1, INVALID_ENDORSEMENT: 2}
FLAG_NAMES = {v: k for k, v in FLAG_CODES.items()}


class LedgerError(SimError):
    pass


class EmptyListError(LedgerError):
    pass


class BadPrevHashError(LedgerError):
    pass


class BadRootError(LedgerError):
    pass


class NonConsecutiveError(LedgerError):
    pass


class OutOfOrderApplyError(LedgerError):
    pass


class UnknownIdentityError(LedgerError):
    pass


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# Canonical wire encoding: every variable-length field is length-prefixed with
# a 4-byte big-endian count, fixed-width integers are big-endian. Roots and
# ids are therefore bit-identical across implementations of this format.

def lp(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


def lp_str(s: str) -> bytes:
    return lp(s.encode())


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _enc_version(version: tuple[int, int] | None) -> bytes:
    if version is None:
        return b"\x00"
    return b"\x01" + version[0].to_bytes(8, "big") + version[1].to_bytes(4, "big")


def _enc_read_set(read_set: list[tuple[str, tuple[int, int] | None]]) -> bytes:
    out = [len(read_set).to_bytes(4, "big")]
    for key, version in read_set:
        out.append(lp_str(key))
        out.append(_enc_version(version))
    return b"".join(out)


def _enc_write_set(write_set: list[tuple[str, bytes]]) -> bytes:
    out = [len(write_set).to_bytes(4, "big")]
    for key, value in write_set:
        out.append(lp_str(key))
        out.append(lp(value))
    return b"".join(out)


@dataclass(frozen=True)
class Transaction:
    creator: str
    contract: str
    function: str
    args: bytes  # canonical JSON
    nonce: int
    kind: str = INVOKE
    read_set: tuple = ()  # ((key, (block, idx) | None), ...)
    write_set: tuple = ()  # ((key, value_bytes), ...)
    transport_size_bytes: int = 0
    endorsements: tuple = ()  # ((peer_id, signature_bytes), ...)

    def content_bytes(self) -> bytes:
        return b"".join((
            lp_str(self.creator),
            lp_str(self.contract),
            lp_str(self.function),
            lp(self.args),
            self.nonce.to_bytes(8, "big"),
            lp_str(self.kind),
            lp(_enc_read_set(list(self.read_set))),
            lp(_enc_write_set(list(self.write_set))),
            self.transport_size_bytes.to_bytes(8, "big"),
        ))

    def record_bytes(self) -> bytes:
        """Content plus endorsements: the bytes a block binds via its root."""
        parts = [self.content_bytes(), len(self.endorsements).to_bytes(4, "big")]
        for peer_id, signature in self.endorsements:
            parts.append(lp_str(peer_id))
            parts.append(lp(signature))
        return b"".join(parts)

    @property
    def tx_id(self) -> bytes:
        return sha256(self.content_bytes())

    @property
    def tx_id_hex(self) -> str:
        return self.tx_id.hex()


@dataclass(frozen=True)
class BlockHeader:
    number: int
    prev_hash: bytes
    merkle_root: bytes
    proposer: str
    timestamp_us: int

    def header_bytes(self) -> bytes:
        return b"".join((
            self.number.to_bytes(8, "big"),
            self.prev_hash,
            self.merkle_root,
            lp_str(self.proposer),
            self.timestamp_us.to_bytes(8, "big"),
        ))

    def digest(self) -> bytes:
        return sha256(self.header_bytes())


# Per-transaction wire overhead used for transport-size estimates.
TX_OVERHEAD_BYTES = 256
BLOCK_OVERHEAD_BYTES = 512


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    txs: tuple = ()
    validity_flags: tuple | None = None  # set by validating peers, outside the hash

    @property
    def transport_size_bytes(self) -> int:
        return BLOCK_OVERHEAD_BYTES + sum(
            tx.transport_size_bytes + TX_OVERHEAD_BYTES for tx in self.txs
        )

    def with_flags(self, flags: list[str]) -> "Block":
        return replace(self, validity_flags=tuple(flags))


def merkle_root(txs) -> bytes:
    """Merkle root over full transaction records (content + endorsements).

    Leaves are sha256(record); odd levels duplicate the last node; a single
    leaf is hashed once more so the root never equals a leaf digest.
    """
    if not txs:
        raise EmptyListError("merkle root of zero transactions")
    level = [sha256(tx.record_bytes()) for tx in txs]
    if len(level) == 1:
        return sha256(level[0])
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def merkle_proof(txs, index: int) -> list[tuple[str, bytes | None]]:
    """Inclusion proof for txs[index]: a list of (side, sibling) steps.

    side is "l"/"r" for where the sibling concatenates; a (None, None) step
    hashes the accumulator alone (single-leaf rule).
    """
    if not txs:
        raise EmptyListError("merkle proof of zero transactions")
    level = [sha256(tx.record_bytes()) for tx in txs]
    if len(level) == 1:
        return [(None, None)]
    proof: list[tuple[str, bytes | None]] = []
    pos = index
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        sibling = pos + 1 if pos % 2 == 0 else pos - 1
        side = "r" if pos % 2 == 0 else "l"
        proof.append((side, level[sibling]))
        level = [sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        pos //= 2
    return proof


def verify_merkle_proof(leaf: bytes, proof, root: bytes) -> bool:
    acc = leaf
    for side, sibling in proof:
        if sibling is None:
            acc = sha256(acc)
        elif side == "r":
            acc = sha256(acc + sibling)
        else:
            acc = sha256(sibling + acc)
    return acc == root


class WorldState:
    """Versioned key-value view over the committed chain."""

    def __init__(self):
        self._map: dict[str, tuple[bytes, tuple[int, int]]] = {}
        self.applied_height = -1

    def get(self, key: str) -> tuple[bytes, tuple[int, int]] | None:
        return self._map.get(key)

    def get_value(self, key: str) -> bytes | None:
        item = self._map.get(key)
        return item[0] if item else None

    def version(self, key: str) -> tuple[int, int] | None:
        item = self._map.get(key)
        return item[1] if item else None

    def apply_block(self, block: Block) -> None:
        if block.header.number != self.applied_height + 1:
            raise OutOfOrderApplyError(
                f"apply block {block.header.number} at height {self.applied_height}")
        if block.validity_flags is None or len(block.validity_flags) != len(block.txs):
            raise LedgerError("block must be validated before apply")
        for idx, (tx, flag) in enumerate(zip(block.txs, block.validity_flags)):
            if flag != VALID:
                continue
            for key, value in tx.write_set:
                self._map[key] = (value, (block.header.number, idx))
        self.applied_height = block.header.number

    def items(self):
        return sorted(self._map.items())

    def fingerprint(self) -> bytes:
        h = hashlib.sha256()
        for key, (value, version) in self.items():
            h.update(lp_str(key))
            h.update(lp(value))
            h.update(_enc_version(version))
        return h.digest()


class KeyedHashSigner:
    """Deterministic HMAC-SHA256 signatures; swappable for a real scheme."""

    def sign(self, key: bytes, data: bytes) -> bytes:
        return hmac.new(key, data, hashlib.sha256).digest()

    def verify(self, key: bytes, data: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(key, data), signature)


ROLE_ORDERER = "orderer"
ROLE_PEER = "peer"
ROLE_CLIENT = "client"


class IdentityRegistry:
    """Stand-in for the certificate authority: fixed roles, per-identity keys."""

    def __init__(self, signer: KeyedHashSigner | None = None, seed: int = 0):
        self.signer = signer or KeyedHashSigner()
        self.seed = seed
        self._identities: dict[str, tuple[str, bytes]] = {}

    def register(self, identity: str, role: str, key: bytes | None = None) -> None:
        if key is None:
            key = sha256(f"identity:{self.seed}:{identity}".encode())
        self._identities[identity] = (role, key)

    def role(self, identity: str) -> str:
        return self._entry(identity)[0]

    def key(self, identity: str) -> bytes:
        return self._entry(identity)[1]

    def _entry(self, identity: str) -> tuple[str, bytes]:
        try:
            return self._identities[identity]
        except KeyError:
            raise UnknownIdentityError(identity) from None

    def known(self, identity: str) -> bool:
        return identity in self._identities

    def sign(self, identity: str, data: bytes) -> bytes:
        return self.signer.sign(self.key(identity), data)

    def verify(self, identity: str, data: bytes, signature: bytes) -> bool:
        if not self.known(identity):
            return False
        return self.signer.verify(self.key(identity), data, signature)

    def identities(self) -> dict[str, tuple[str, bytes]]:
        return dict(self._identities)


def endorsement_valid(tx: Transaction, registry: IdentityRegistry, threshold: int) -> bool:
    """At least `threshold` distinct peer-role signatures over the content."""
    content = tx.content_bytes()
    signers = set()
    for peer_id, signature in tx.endorsements:
        if peer_id in signers:
            continue
        if not registry.known(peer_id) or registry.role(peer_id) != ROLE_PEER:
            continue
        if registry.verify(peer_id, content, signature):
            signers.add(peer_id)
    return len(signers) >= threshold


def validate_block(block: Block, state: WorldState, registry: IdentityRegistry,
                   threshold: int) -> list[str]:
    """MVCC + endorsement validation, serially in block order.

    Earlier valid txs in the same block bump versions that later txs'
    read sets are checked against.
    """
    flags: list[str] = []
    overlay: dict[str, tuple[int, int]] = {}
    for idx, tx in enumerate(block.txs):
        if not endorsement_valid(tx, registry, threshold):
            flags.append(INVALID_ENDORSEMENT)
            continue
        ok = True
        for key, version in tx.read_set:
            current = overlay.get(key, state.version(key))
            if current != version:
                ok = False
                break
        if not ok:
            flags.append(INVALID_VERSION_CONFLICT)
            continue
        flags.append(VALID)
        for key, _value in tx.write_set:
            overlay[key] = (block.header.number, idx)
    return flags


def seal_block(number: int, prev_hash: bytes, txs, proposer: str, timestamp_us: int) -> Block:
    return Block(
        header=BlockHeader(number, prev_hash, merkle_root(txs), proposer, timestamp_us),
        txs=tuple(txs),
    )


@dataclass
class VerifyResult:
    ok: bool
    bad_number: int | None = None
    reason: str | None = None

    def __str__(self) -> str:
        if self.ok:
            return "Ok"
        return f"FirstBadBlock({self.bad_number}, {self.reason})"


class Chain:
    """An ordered list of blocks with structural append checks."""

    def __init__(self, genesis: Block | None = None):
        self.blocks: list[Block] = []
        if genesis is not None:
            if genesis.header.prev_hash != ZERO_DIGEST:
                raise BadPrevHashError("genesis prev_hash must be all-zero")
            if genesis.header.number != 0:
                raise NonConsecutiveError("genesis number must be 0")
            if genesis.header.merkle_root != merkle_root(genesis.txs):
                raise BadRootError("genesis merkle root mismatch")
            self.blocks.append(genesis)

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def append_block(self, block: Block) -> None:
        if self.blocks:
            expected = self.tip.header.digest()
            if block.header.number != self.tip.header.number + 1:
                raise NonConsecutiveError(
                    f"block {block.header.number} after {self.tip.header.number}")
            if block.header.prev_hash != expected:
                raise BadPrevHashError(f"block {block.header.number}")
        else:
            if block.header.number != 0 or block.header.prev_hash != ZERO_DIGEST:
                raise BadPrevHashError("first block must be a genesis block")
        if block.header.merkle_root != merkle_root(block.txs):
            raise BadRootError(f"block {block.header.number}")
        self.blocks.append(block)


def verify_chain(chain: Chain, registry: IdentityRegistry | None = None,
                 threshold: int = 0) -> VerifyResult:
    """Full re-walk: hash links, Merkle roots, then version semantics.

    With a registry, endorsements and stored validity flags are recomputed
    and compared; without one, flags are taken at face value for the replay.
    """
    state = WorldState()
    prev_digest = ZERO_DIGEST
    for i, block in enumerate(chain.blocks):
        hdr = block.header
        if hdr.number != i:
            return VerifyResult(False, i, "NonConsecutive")
        if hdr.prev_hash != prev_digest:
            return VerifyResult(False, i, "BadPrevHash")
        try:
            root = merkle_root(block.txs)
        except EmptyListError:
            return VerifyResult(False, i, "EmptyBlock")
        if hdr.merkle_root != root:
            return VerifyResult(False, i, "BadRoot")
        if block.validity_flags is None or len(block.validity_flags) != len(block.txs):
            return VerifyResult(False, i, "MissingFlags")
        if registry is not None:
            recomputed = validate_block(block, state, registry, threshold)
            if list(block.validity_flags) != recomputed:
                return VerifyResult(False, i, "BadValidityFlags")
        state.apply_block(block)
        prev_digest = hdr.digest()
    return VerifyResult(True)


# -- binary export / import -------------------------------------------------

MAGIC = b"IODL"
FORMAT_VERSION = 1


def _block_to_bytes(block: Block) -> bytes:
    # The header digest trailer pins header-field corruption to this block;
    # without it a flipped timestamp would only surface at the next block's
    # prev_hash check.
    parts = [block.header.header_bytes(), block.header.digest(),
             len(block.txs).to_bytes(4, "big")]
    for tx in block.txs:
        parts.append(lp(tx.content_bytes()))
        parts.append(len(tx.endorsements).to_bytes(4, "big"))
        for peer_id, signature in tx.endorsements:
            parts.append(lp_str(peer_id))
            parts.append(lp(signature))
    flags = block.validity_flags or ()
    parts.append(len(flags).to_bytes(4, "big"))
    parts.append(bytes(FLAG_CODES[f] for f in flags))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise LedgerError("truncated ledger data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def lp(self) -> bytes:
        return self.take(self.u32())

    def lp_str(self) -> str:
        return self.lp().decode()


def _tx_from_content(content: bytes, endorsements: tuple) -> Transaction:
    r = _Reader(content)
    creator = r.lp_str()
    contract = r.lp_str()
    function = r.lp_str()
    args = r.lp()
    nonce = r.u64()
    kind = r.lp_str()
    rs_reader = _Reader(r.lp())
    read_set = []
    for _ in range(rs_reader.u32()):
        key = rs_reader.lp_str()
        marker = rs_reader.take(1)
        if marker == b"\x00":
            read_set.append((key, None))
        else:
            read_set.append((key, (rs_reader.u64(), rs_reader.u32())))
    ws_reader = _Reader(r.lp())
    write_set = []
    for _ in range(ws_reader.u32()):
        write_set.append((ws_reader.lp_str(), ws_reader.lp()))
    transport = r.u64()
    tx = Transaction(creator, contract, function, args, nonce, kind,
                     tuple(read_set), tuple(write_set), transport, endorsements)
    if tx.content_bytes() != content:
        raise LedgerError("non-canonical transaction encoding")
    return tx


def _block_from_bytes(data: bytes) -> Block:
    r = _Reader(data)
    number = r.u64()
    prev_hash = r.take(DIGEST_SIZE)
    root = r.take(DIGEST_SIZE)
    proposer = r.lp_str()
    timestamp = r.u64()
    header = BlockHeader(number, prev_hash, root, proposer, timestamp)
    if r.take(DIGEST_SIZE) != header.digest():
        raise LedgerError("header digest trailer mismatch")
    txs = []
    for _ in range(r.u32()):
        content = r.lp()
        endorsements = []
        for _ in range(r.u32()):
            peer_id = r.lp_str()
            endorsements.append((peer_id, r.lp()))
        txs.append(_tx_from_content(content, tuple(endorsements)))
    nflags = r.u32()
    flag_bytes = r.take(nflags)
    try:
        flags = tuple(FLAG_NAMES[b] for b in flag_bytes) if nflags else None
    except KeyError:
        raise LedgerError("unknown validity flag code") from None
    if r.pos != len(data):
        raise LedgerError("trailing bytes after block record")
    return Block(header, tuple(txs), flags)


def export_chain(chain: Chain, bin_path, index_path, registry: IdentityRegistry | None = None,
                 threshold: int = 0) -> None:
    """Write the length-prefixed block log plus a JSON index next to it."""
    blocks_meta = []
    with open(bin_path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(2, "big"))
        fh.write(len(chain.blocks).to_bytes(4, "big"))
        for block in chain.blocks:
            raw = _block_to_bytes(block)
            fh.write(len(raw).to_bytes(4, "big"))
            blocks_meta.append({
                "number": block.header.number,
                "offset": fh.tell(),  # start of the record, after its length prefix
                "length": len(raw),
                "hash": block.header.digest().hex(),
                "txs": len(block.txs),
            })
            fh.write(raw)
    index = {"format_version": FORMAT_VERSION, "blocks": blocks_meta,
             "endorsement_threshold": threshold}
    if registry is not None:
        index["identities"] = {
            identity: {"role": role, "key": key.hex()}
            for identity, (role, key) in sorted(registry.identities().items())
        }
    with open(index_path, "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")


def import_chain(bin_path) -> Chain:
    """Parse an exported block log without structural checks (verify separately)."""
    with open(bin_path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise LedgerError("bad ledger magic")
    if int.from_bytes(r.take(2), "big") != FORMAT_VERSION:
        raise LedgerError("unsupported ledger format version")
    count = r.u32()
    chain = Chain()
    for _ in range(count):
        chain.blocks.append(_block_from_bytes(r.lp()))
    return chain


def load_and_verify(bin_path, index_path=None) -> VerifyResult:
    """Audit an exported ledger: per-block parse, then the full chain re-walk.

    A record that no longer parses is reported as that block's violation, so
    bit flips land on the block that actually holds them.
    """
    with open(bin_path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    try:
        if r.take(4) != MAGIC:
            return VerifyResult(False, 0, "BadMagic")
        if int.from_bytes(r.take(2), "big") != FORMAT_VERSION:
            return VerifyResult(False, 0, "BadVersion")
        count = r.u32()
    except LedgerError:
        return VerifyResult(False, 0, "ParseError")
    chain = Chain()
    for i in range(count):
        try:
            chain.blocks.append(_block_from_bytes(r.lp()))
        except (LedgerError, UnicodeDecodeError, OverflowError):
            return VerifyResult(False, i, "ParseError")
    registry = None
    threshold = 0
    if index_path is not None:
        index = import_index(index_path)
        registry = registry_from_index(index)
        threshold = index.get("endorsement_threshold", 0)
    return verify_chain(chain, registry, threshold)


def import_index(index_path) -> dict:
    with open(index_path) as fh:
        return json.load(fh)


def registry_from_index(index: dict) -> IdentityRegistry:
    registry = IdentityRegistry()
    for identity, info in sorted(index.get("identities", {}).items()):
        registry.register(identity, info["role"], bytes.fromhex(info["key"]))
    return registry
