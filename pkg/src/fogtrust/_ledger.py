# Little-endian layouts: OffloadRecord is 72 bytes
# (record_id, job_id, action u64 | outcome_digest 32B | submit, deadline f64),
# BlockHeader is 88 bytes (index u64 | timestamp f64 | prev_hash, merkle_root 32B
# | nonce u64).

import hashlib
import logging
import struct
from dataclasses import dataclass, field
from enum import StrEnum
from operator import attrgetter
from pathlib import Path
from typing import Self

from pydantic import Field

from ._errors import AuditError, ParameterError, QueryError
from ._model import FrozenModel
from ._schedulability import TimingBounds, scale_bounds

logger = logging.getLogger(__name__)

ZERO_HASH = bytes(32)

_RECORD = struct.Struct("<QQQ32sdd")
_HEADER = struct.Struct("<Qd32s32sQ")


def hash_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def merkle_root(tx_digests: list[bytes]) -> bytes:
    """
    Root of the binary hash tree over the given leaf digests.

    An odd level duplicates its last node; a single leaf is its own root and
    an empty list hashes to SHA-256 of the empty string.
    """
    if not tx_digests:
        return hash_bytes(b"")

    level = list(tx_digests)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [hash_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def leading_zero_bits(digest: bytes) -> int:
    value = int.from_bytes(digest, "big")
    return len(digest) * 8 - value.bit_length()


class Selection(StrEnum):
    FIFO = "fifo"
    EDF = "edf"


class LedgerConfig(FrozenModel):
    enabled: bool = True
    difficulty: int = Field(default=8, ge=0, le=32)
    selection: Selection = Selection.EDF
    max_tx_per_block: int = Field(default=10, gt=0)
    hash_rate: float = Field(default=1e6, gt=0)
    c_gen_block: float = Field(default=5.0, gt=0)
    c_val_block: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=1.0, gt=0)
    beta: float = Field(default=1.0, gt=0)

    @property
    def timing(self) -> TimingBounds:
        return scale_bounds(self.c_gen_block, self.c_val_block, self.alpha, self.beta)


@dataclass
class OffloadRecord:
    record_id: int
    job_id: int
    action: int
    outcome_digest: bytes
    submit_time: float
    record_deadline: float
    confirmed_time: float | None = None

    def to_bytes(self) -> bytes:
        return _RECORD.pack(
            self.record_id,
            self.job_id,
            self.action,
            self.outcome_digest,
            self.submit_time,
            self.record_deadline,
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        return cls(*_RECORD.unpack(data))

    @property
    def digest(self) -> bytes:
        return hash_bytes(self.to_bytes())


@dataclass(frozen=True)
class BlockHeader:
    index: int
    timestamp: float
    prev_hash: bytes
    merkle_root: bytes
    nonce: int

    def to_bytes(self) -> bytes:
        return _HEADER.pack(
            self.index, self.timestamp, self.prev_hash, self.merkle_root, self.nonce
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        return cls(*_HEADER.unpack(data))


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[OffloadRecord, ...]
    hash: bytes


@dataclass
class Chain:
    difficulty: int = 8
    selection: Selection = Selection.EDF
    max_tx_per_block: int = 10
    timing: TimingBounds = field(default_factory=lambda: scale_bounds(5.0, 1.0, 1.0, 1.0))
    hash_rate: float = 1e6
    blocks: list[Block] = field(default_factory=list)

    @classmethod
    def from_config(cls, config: LedgerConfig) -> Self:
        return cls(
            difficulty=config.difficulty,
            selection=config.selection,
            max_tx_per_block=config.max_tx_per_block,
            timing=config.timing,
            hash_rate=config.hash_rate,
        )

    @property
    def records(self) -> list[OffloadRecord]:
        return [tx for block in self.blocks for tx in block.transactions]


def select_transactions(
    pending: list[OffloadRecord], policy: Selection, max_tx: int, now: float
) -> list[OffloadRecord]:
    """
    Pick the records for the next block, in selection order.

    Fifo orders by (submit_time, record_id); Edf by (record_deadline,
    submit_time, record_id). Only records submitted by `now` are eligible.
    """
    if max_tx <= 0:
        raise ParameterError(f"max_tx must be positive, got {max_tx}")

    eligible = (r for r in pending if r.submit_time <= now)
    match policy:
        case Selection.FIFO:
            key = attrgetter("submit_time", "record_id")
        case Selection.EDF:
            key = attrgetter("record_deadline", "submit_time", "record_id")

    return sorted(eligible, key=key)[:max_tx]


def _search_nonce(prefix: bytes, difficulty: int) -> tuple[int, bytes]:
    nonce = 0
    while True:
        digest = hash_bytes(prefix + struct.pack("<Q", nonce))
        if leading_zero_bits(digest) >= difficulty:
            return nonce, digest
        nonce += 1


def mine_block(
    chain: Chain, pending: list[OffloadRecord], now: float
) -> tuple[Block, float]:
    """
    Select records from `pending`, find a nonce and append the block.

    Selected records are removed from `pending` and stamped with
    confirmed_time = now + duration + C_val_fog. The simulated duration is the
    nonce search time at the chain's hash rate, floored at C_gen_fog.

    :return: the appended block and its mining duration
    """
    selected = select_transactions(pending, chain.selection, chain.max_tx_per_block, now)
    if not selected:
        raise ParameterError(f"no pending records submitted by t={now}")

    index = len(chain.blocks)
    prev_hash = chain.blocks[-1].hash if chain.blocks else ZERO_HASH
    root = merkle_root([r.digest for r in selected])

    # header encoding ends with the nonce
    prefix = _HEADER.pack(index, now, prev_hash, root, 0)[:-8]
    nonce, digest = _search_nonce(prefix, chain.difficulty)

    header = BlockHeader(index, now, prev_hash, root, nonce)
    block = Block(header=header, transactions=tuple(selected), hash=digest)
    chain.blocks.append(block)

    search_time = (nonce + 1) / chain.hash_rate
    duration = max(chain.timing.c_gen_fog, search_time)
    confirmed = now + duration + chain.timing.c_val_fog

    chosen = {id(r) for r in selected}
    pending[:] = [r for r in pending if id(r) not in chosen]
    for record in selected:
        record.confirmed_time = confirmed

    logger.debug(
        f"mined block {index} with {len(selected)} records after {nonce + 1} attempts"
    )
    return block, duration


class BadReason(StrEnum):
    INDEX = "index mismatch"
    GENESIS = "genesis prev_hash not zero"
    LINK = "link mismatch"
    MERKLE = "merkle mismatch"
    HASH = "header hash mismatch"
    DIFFICULTY = "difficulty not met"


@dataclass(frozen=True)
class ChainVerdict:
    bad_index: int | None = None
    reason: BadReason | None = None

    @property
    def ok(self) -> bool:
        return self.bad_index is None

    def __bool__(self) -> bool:
        return self.ok


def verify_chain(chain: Chain) -> ChainVerdict:
    """Check every block in index order and report the first violation."""
    prev_hash = ZERO_HASH
    for k, block in enumerate(chain.blocks):
        header = block.header
        if header.index != k:
            return ChainVerdict(k, BadReason.INDEX)
        if header.prev_hash != prev_hash:
            return ChainVerdict(k, BadReason.GENESIS if k == 0 else BadReason.LINK)
        if header.merkle_root != merkle_root([tx.digest for tx in block.transactions]):
            return ChainVerdict(k, BadReason.MERKLE)
        if hash_bytes(header.to_bytes()) != block.hash:
            return ChainVerdict(k, BadReason.HASH)
        if leading_zero_bits(block.hash) < chain.difficulty:
            return ChainVerdict(k, BadReason.DIFFICULTY)
        prev_hash = block.hash

    return ChainVerdict()


def confirmation_latency(record: OffloadRecord) -> float:
    if record.confirmed_time is None:
        raise QueryError(f"record {record.record_id} is not confirmed")
    return record.confirmed_time - record.submit_time


@dataclass
class Miner:
    """
    Single dedicated miner feeding one chain.

    The miner starts a block whenever it is idle and records are pending; it
    is busy for the block's mining duration. Mining uses no fog capacity.
    """

    chain: Chain
    pending: list[OffloadRecord] = field(default_factory=list)
    busy_until: float | None = None

    def submit(self, record: OffloadRecord) -> None:
        self.pending.append(record)

    def try_start(self, now: float) -> float | None:
        """Start a block if idle; return the time the miner frees up."""
        if self.busy_until is not None:
            return None
        if not any(r.submit_time <= now for r in self.pending):
            return None
        _, duration = mine_block(self.chain, self.pending, now)
        self.busy_until = now + duration
        return self.busy_until

    def finish(self) -> None:
        self.busy_until = None

    def flush(self, now: float) -> None:
        """Mine until no record is pending, starting no earlier than `now`."""
        while self.pending or self.busy_until is not None:
            if self.busy_until is not None:
                now = max(now, self.busy_until)
                self.finish()
            elif not any(r.submit_time <= now for r in self.pending):
                now = min(r.submit_time for r in self.pending)
            self.try_start(now)


def confirm_records(records: list[OffloadRecord], chain: Chain) -> list[OffloadRecord]:
    """
    Replay records through a single miner in submit order.

    :return: the records, each with its confirmed_time set
    """
    miner = Miner(chain)
    ordered = sorted(records, key=lambda r: (r.submit_time, r.record_id))
    for record in ordered:
        while miner.busy_until is not None and miner.busy_until <= record.submit_time:
            freed = miner.busy_until
            miner.finish()
            miner.try_start(freed)
        miner.submit(record)
        miner.try_start(record.submit_time)
    miner.flush(ordered[-1].submit_time if ordered else 0.0)

    return ordered


class ChainLine(FrozenModel):
    """One block of an exported chain, hashes and transactions hex-encoded."""

    index: int
    timestamp: float
    prev_hash: str
    merkle_root: str
    nonce: int
    hash: str
    difficulty: int
    transactions: list[str]

    @classmethod
    def from_block(cls, block: Block, difficulty: int) -> Self:
        h = block.header
        return cls(
            index=h.index,
            timestamp=h.timestamp,
            prev_hash=h.prev_hash.hex(),
            merkle_root=h.merkle_root.hex(),
            nonce=h.nonce,
            hash=block.hash.hex(),
            difficulty=difficulty,
            transactions=[tx.to_bytes().hex() for tx in block.transactions],
        )

    def to_block(self) -> Block:
        header = BlockHeader(
            index=self.index,
            timestamp=self.timestamp,
            prev_hash=bytes.fromhex(self.prev_hash),
            merkle_root=bytes.fromhex(self.merkle_root),
            nonce=self.nonce,
        )
        transactions = tuple(
            OffloadRecord.from_bytes(bytes.fromhex(tx)) for tx in self.transactions
        )
        return Block(
            header=header, transactions=transactions, hash=bytes.fromhex(self.hash)
        )


def write_chain(chain: Chain, path: Path | str) -> None:
    """Write one JSON line per block."""
    lines = [
        ChainLine.from_block(block, chain.difficulty).model_dump_json()
        for block in chain.blocks
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines))
    logger.info(f"wrote {len(lines)} blocks to {path}")


def read_chain(path: Path | str, config: LedgerConfig | None = None) -> Chain:
    """
    Load an exported chain for verification.

    Every block line must carry the same difficulty, and it must match
    `config` when one is given. Selection and timing come from `config`
    (defaults when omitted) since they are not part of the exported bytes.

    :raises AuditError: if the difficulties disagree
    """
    chain = Chain.from_config(config or LedgerConfig())
    lines = [
        ChainLine.model_validate_json(text)
        for text in Path(path).read_text().splitlines()
        if text.strip()
    ]
    difficulties = {line.difficulty for line in lines}
    if config is not None:
        difficulties.add(config.difficulty)
    if len(difficulties) > 1:
        raise AuditError(f"{path}: conflicting difficulties {sorted(difficulties)}")
    if difficulties:
        chain.difficulty = difficulties.pop()
    chain.blocks = [line.to_block() for line in lines]
    logger.debug(f"read {len(chain.blocks)} blocks from {path}")
    return chain
