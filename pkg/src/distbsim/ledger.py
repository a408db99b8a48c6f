"""Hash-chained block store with proof-of-work mining and validation.

Two chains back the fabric: the control chain versions flow-rule updates
and isolation orders; the data chain records unanimously agreed flow-table
dump digests. Headers serialize to exactly 80 bytes:

    version(4) | prev_hash(32) | payload_digest(32) | timestamp(4)
    | difficulty(4) | nonce(4)

little-endian integers throughout. A header's SHA-256 must clear its
declared difficulty, counted in leading zero bits. Mining scans nonces
from 0 upward, so identical inputs always yield identical blocks.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Optional, Union

from . import _kernels
from .flowtable import RuleSet, canonical_json, rules_from_obj

HEADER_LEN = 80
HEADER_FMT = "<I32s32sIII"
ZERO_DIGEST = bytes(32)
MAX_NONCE = 2**32
DEFAULT_DIFFICULTY = 12

_CHAIN_MAGIC = b"DBC1"


class LedgerError(Exception):
    pass


class NonceExhausted(LedgerError):
    """No nonce in [0, 2^32) satisfies the difficulty target."""


class MissingSwitch(LedgerError):
    def __init__(self, switch_id: int):
        super().__init__(f"dump round missing digest for switch {switch_id}")
        self.switch_id = switch_id


class WrongChainKind(LedgerError):
    pass


class ValidationError(enum.Enum):
    LINK_MISMATCH = "LinkMismatch"
    INDEX_GAP = "IndexGap"
    PAYLOAD_DIGEST_MISMATCH = "PayloadDigestMismatch"
    POW_UNMET = "PowUnmet"
    TIMESTAMP_REGRESSION = "TimestampRegression"


class ChainKind(enum.Enum):
    CONTROL = "control"
    DATA = "data"


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: bytes
    payload_digest: bytes
    timestamp: int
    difficulty: int
    nonce: int

    def pack(self) -> bytes:
        data = struct.pack(HEADER_FMT, self.version, self.prev_hash,
                           self.payload_digest, self.timestamp,
                           self.difficulty, self.nonce)
        assert len(data) == HEADER_LEN
        return data

    @classmethod
    def unpack(cls, data: bytes) -> "BlockHeader":
        if len(data) != HEADER_LEN:
            raise LedgerError(f"header must be {HEADER_LEN} bytes, got {len(data)}")
        version, prev_hash, payload_digest, timestamp, difficulty, nonce = (
            struct.unpack(HEADER_FMT, data))
        return cls(version, prev_hash, payload_digest, timestamp, difficulty, nonce)


@dataclass(frozen=True)
class RuleUpdate:
    rules: RuleSet

    def to_obj(self) -> dict:
        return {"kind": "rule_update", "rules": self.rules.to_obj()}


@dataclass(frozen=True)
class DumpRecord:
    switch_digests: tuple  # ((switch_id, digest_bytes), ...) sorted by id

    @classmethod
    def from_mapping(cls, digests) -> "DumpRecord":
        return cls(tuple(sorted((int(k), bytes(v)) for k, v in digests.items())))

    def to_obj(self) -> dict:
        return {
            "digests": {str(sid): digest.hex() for sid, digest in self.switch_digests},
            "kind": "dump_record",
        }


@dataclass(frozen=True)
class IsolationOrder:
    target: int
    new_rules: RuleSet

    def to_obj(self) -> dict:
        return {"kind": "isolation_order", "rules": self.new_rules.to_obj(),
                "target": self.target}


BlockPayload = Union[RuleUpdate, DumpRecord, IsolationOrder]


def payload_bytes(payload: BlockPayload) -> bytes:
    return canonical_json(payload.to_obj())


def payload_from_bytes(data: bytes) -> BlockPayload:
    import json

    obj = json.loads(data.decode("utf-8"))
    kind = obj.get("kind")
    if kind == "rule_update":
        return RuleUpdate(rules=rules_from_obj(obj["rules"]))
    if kind == "dump_record":
        digests = {int(k): bytes.fromhex(v) for k, v in obj["digests"].items()}
        return DumpRecord.from_mapping(digests)
    if kind == "isolation_order":
        return IsolationOrder(target=obj["target"], new_rules=rules_from_obj(obj["rules"]))
    raise LedgerError(f"unknown payload kind {kind!r}")


def payload_digest(payload: BlockPayload) -> bytes:
    return hashlib.sha256(payload_bytes(payload)).digest()


@dataclass(frozen=True)
class Block:
    index: int
    header: BlockHeader
    payload: BlockPayload
    block_hash: bytes  # cached hash_block(header)

    def pack(self) -> bytes:
        body = payload_bytes(self.payload)
        return (struct.pack("<I", self.index) + self.header.pack()
                + struct.pack("<I", len(body)) + body)

    @classmethod
    def unpack(cls, data: bytes) -> "Block":
        if len(data) < 4 + HEADER_LEN + 4:
            raise LedgerError("truncated block record")
        index = struct.unpack_from("<I", data, 0)[0]
        header = BlockHeader.unpack(data[4:4 + HEADER_LEN])
        (body_len,) = struct.unpack_from("<I", data, 4 + HEADER_LEN)
        body = data[4 + HEADER_LEN + 4:]
        if len(body) != body_len:
            raise LedgerError("block payload length mismatch")
        return cls(index=index, header=header, payload=payload_from_bytes(body),
                   block_hash=hash_block(header))


def hash_block(header: BlockHeader) -> bytes:
    """SHA-256 of the 80-byte canonical header serialization."""
    return hashlib.sha256(header.pack()).digest()


def mine_block(payload: BlockPayload, prev: Optional[Block], difficulty: int,
               clock: float, *, version: int = 1, max_nonce: int = MAX_NONCE) -> Block:
    """Mine the next block after `prev` (None mines a genesis block).

    The nonce search starts at 0 and increments by 1; the number of
    attempts is therefore nonce + 1. Raises NonceExhausted when no 4-byte
    nonce meets the target.
    """
    if difficulty > 32:
        raise LedgerError("difficulty above 32 bits is not searchable with a 4-byte nonce")
    if prev is None:
        index, prev_hash = 0, ZERO_DIGEST
    else:
        index, prev_hash = prev.index + 1, prev.block_hash
    timestamp = int(clock)
    prefix = struct.pack("<I32s32sII", version, prev_hash,
                         payload_digest(payload), timestamp, difficulty)
    found = _kernels.mine_scan(prefix, difficulty, 0, max_nonce)
    if found is None:
        raise NonceExhausted(f"no nonce below {max_nonce} meets difficulty {difficulty}")
    nonce, _attempts, digest = found
    header = BlockHeader(version=version, prev_hash=prev_hash,
                         payload_digest=payload_digest(payload),
                         timestamp=timestamp, difficulty=difficulty, nonce=nonce)
    return Block(index=index, header=header, payload=payload, block_hash=digest)


def _pow_met(header: BlockHeader) -> bool:
    return _kernels.leading_zero_bits(hash_block(header)) >= header.difficulty


def validate_block(block: Block, prev: Block) -> Optional[ValidationError]:
    """First failed check linking `block` onto `prev`, or None when valid."""
    if block.header.prev_hash != hash_block(prev.header):
        return ValidationError.LINK_MISMATCH
    if block.index != prev.index + 1:
        return ValidationError.INDEX_GAP
    if block.header.payload_digest != payload_digest(block.payload):
        return ValidationError.PAYLOAD_DIGEST_MISMATCH
    if not _pow_met(block.header):
        return ValidationError.POW_UNMET
    if block.header.timestamp < prev.header.timestamp:
        return ValidationError.TIMESTAMP_REGRESSION
    return None


def validate_genesis(block: Block) -> Optional[ValidationError]:
    if block.header.prev_hash != ZERO_DIGEST:
        return ValidationError.LINK_MISMATCH
    if block.index != 0:
        return ValidationError.INDEX_GAP
    if block.header.payload_digest != payload_digest(block.payload):
        return ValidationError.PAYLOAD_DIGEST_MISMATCH
    if not _pow_met(block.header):
        return ValidationError.POW_UNMET
    return None


class Chain:
    """Append-only list of blocks under one mining difficulty."""

    def __init__(self, kind: ChainKind, difficulty: int, blocks: list[Block]):
        if not blocks:
            raise LedgerError("chain must hold at least a genesis block")
        self.kind = kind
        self.difficulty = difficulty
        self.blocks = blocks

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def append(self, payload: BlockPayload, clock: float) -> Block:
        block = mine_block(payload, self.head, self.difficulty, clock)
        self.blocks.append(block)
        return block


def new_control_chain(initial_rules: RuleSet, difficulty: int = DEFAULT_DIFFICULTY,
                      clock: float = 0.0) -> Chain:
    """Control chain whose genesis holds the initial flow-rule set."""
    genesis = mine_block(RuleUpdate(rules=initial_rules), None, difficulty, clock)
    return Chain(ChainKind.CONTROL, difficulty, [genesis])


def new_data_chain(difficulty: int = DEFAULT_DIFFICULTY, clock: float = 0.0) -> Chain:
    """Data chain whose genesis holds an empty dump record."""
    genesis = mine_block(DumpRecord.from_mapping({}), None, difficulty, clock)
    return Chain(ChainKind.DATA, difficulty, [genesis])


def head(chain: Chain) -> Block:
    return chain.head


def validate_chain(chain: Chain) -> Optional[tuple[int, ValidationError]]:
    """(first offending index, error) or None when the whole chain is valid."""
    error = validate_genesis(chain.blocks[0])
    if error is not None:
        return (0, error)
    for i in range(1, len(chain.blocks)):
        error = validate_block(chain.blocks[i], chain.blocks[i - 1])
        if error is not None:
            return (i, error)
    return None


def append_rules(chain: Chain, rules: RuleSet, clock: float) -> Block:
    """Mine and append a rule-update block; prior versions stay readable."""
    if chain.kind is not ChainKind.CONTROL:
        raise WrongChainKind("rule updates belong on the control chain")
    return chain.append(RuleUpdate(rules=rules), clock)


@dataclass(frozen=True)
class DumpOutcome:
    appended: Optional[Block]
    mismatched: tuple

    @property
    def ok(self) -> bool:
        return self.appended is not None


def append_dump(chain: Chain, digests: dict, expected: bytes,
                registered, clock: float) -> DumpOutcome:
    """Record a dump round iff every registered switch reports `expected`.

    Any disagreement rejects the whole round: nothing is appended and the
    mismatching switch ids come back sorted. Missing coverage of a
    registered switch raises MissingSwitch.
    """
    if chain.kind is not ChainKind.DATA:
        raise WrongChainKind("dump records belong on the data chain")
    for sid in sorted(registered):
        if sid not in digests:
            raise MissingSwitch(sid)
    mismatched = tuple(sorted(sid for sid, digest in digests.items()
                              if digest != expected))
    if mismatched:
        return DumpOutcome(appended=None, mismatched=mismatched)
    block = chain.append(DumpRecord.from_mapping(digests), clock)
    return DumpOutcome(appended=block, mismatched=())


def effective_rules(chain: Chain, upto_index: Optional[int] = None) -> RuleSet:
    """The rule set in force at `upto_index` (head by default).

    Dump records never change rules; the latest rule-update or isolation
    block at or below the index wins.
    """
    if chain.kind is not ChainKind.CONTROL:
        raise WrongChainKind("only the control chain carries rules")
    stop = chain.head.index if upto_index is None else upto_index
    for block in reversed(chain.blocks[:stop + 1]):
        if isinstance(block.payload, RuleUpdate):
            return block.payload.rules
        if isinstance(block.payload, IsolationOrder):
            return block.payload.new_rules
    raise LedgerError("control chain holds no rule-bearing block")


def save_chain(chain: Chain, path) -> None:
    """Append-only file: magic, kind, difficulty, then length-prefixed blocks."""
    with open(path, "wb") as fh:
        fh.write(_CHAIN_MAGIC)
        fh.write(struct.pack("<BI", 1 if chain.kind is ChainKind.CONTROL else 2,
                             chain.difficulty))
        for block in chain.blocks:
            record = block.pack()
            fh.write(struct.pack("<I", len(record)))
            fh.write(record)


def load_chain(path) -> Chain:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _CHAIN_MAGIC:
        raise LedgerError("not a chain file (bad magic)")
    kind_code, difficulty = struct.unpack_from("<BI", data, 4)
    kind = ChainKind.CONTROL if kind_code == 1 else ChainKind.DATA
    blocks = []
    offset = 4 + 5
    while offset < len(data):
        if offset + 4 > len(data):
            raise LedgerError(f"truncated record length at block {len(blocks)}")
        (record_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + record_len > len(data):
            raise LedgerError(f"truncated record at block {len(blocks)}")
        blocks.append(Block.unpack(data[offset:offset + record_len]))
        offset += record_len
    return Chain(kind, difficulty, blocks)
