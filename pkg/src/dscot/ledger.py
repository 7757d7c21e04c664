"""Simulated private chain with IBFT-2.0-style finality and gas receipts.

Consensus is simulated at message-tally granularity. For each height the
ledger runs rounds 0, 1, ... with the proposer rotating through the validator
list. Faulty validators are silent: they neither propose, prepare nor commit.
A round commits iff its proposer is honest and at least ``quorum`` validators
send both PREPARE and COMMIT.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .crypto import (
    ZERO_DIGEST,
    Address,
    Digest32,
    KeyPair,
    Signature,
    derive_address,
    keccak256,
    sign,
    verify,
)
from .gas import DEFAULT_SCHEDULE, GasSchedule, GasTrace, meter
from .registry import Event, Registry, RegistryState, Revert

__all__ = [
    "Block",
    "CallResult",
    "Ledger",
    "LedgerError",
    "Receipt",
    "RoundRecord",
    "RoundResult",
    "Transaction",
    "ValidatorSet",
    "encode_args",
]

ALREADY_DEPLOYED = "Registry already deployed"
NOT_DEPLOYED = "Registry not deployed"


class LedgerError(Exception):
    """Admission or lookup failure (bad signature, nonce gap, unknown hash...)."""


# ---------------------------------------------------------------------------
# Transactions
# ---------------------------------------------------------------------------

# "construct" deploys the registry; the rest map 1:1 onto Registry methods
TX_OPERATIONS = ("construct",) + Registry.MUTATING


def _encode_arg(value: Any) -> Any:
    if isinstance(value, bytes):
        return "0x" + bytes(value).hex()
    if isinstance(value, int) or value is None:
        return value
    raise TypeError(f"unsupported argument {value!r}")


def encode_args(args: Sequence[Any]) -> list[Any]:
    return [_encode_arg(a) for a in args]


@dataclass(frozen=True)
class Transaction:
    sender: Address
    operation: str
    args: tuple
    nonce: int
    public_key: bytes
    signature: Signature

    @staticmethod
    def signing_payload(sender: Address, operation: str, args: Sequence[Any], nonce: int) -> bytes:
        body = {"args": encode_args(args), "nonce": nonce, "operation": operation, "sender": str(sender)}
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def create(cls, key: KeyPair, operation: str, args: Sequence[Any], nonce: int) -> "Transaction":
        if operation not in TX_OPERATIONS:
            raise ValueError(f"unknown operation {operation!r}")
        sender = key.address
        payload = cls.signing_payload(sender, operation, args, nonce)
        return cls(sender, operation, tuple(args), nonce, key.public_key, sign(key, payload))

    def payload(self) -> bytes:
        return self.signing_payload(self.sender, self.operation, self.args, self.nonce)

    def encode(self) -> bytes:
        body = json.loads(self.payload())
        body["public_key"] = "0x" + self.public_key.hex()
        body["signature"] = self.signature.to_hex()
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()

    @property
    def hash(self) -> Digest32:
        return keccak256(self.encode())

    def signature_valid(self) -> bool:
        try:
            if derive_address(self.public_key) != self.sender:
                return False
        except ValueError:
            return False
        return self.signature.signer == self.sender and verify(self.public_key, self.payload(), self.signature)


@dataclass(frozen=True)
class Receipt:
    tx_hash: Digest32
    status: str  # "accepted" | "reverted"
    reason: str | None
    events: tuple[Event, ...]
    gas_used: int
    block_number: int
    sender: Address
    operation: str

    @property
    def fee(self) -> int:
        # gas units; no price per unit is modelled
        return self.gas_used

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"

    def to_dict(self) -> dict[str, Any]:
        return {
            "block_number": self.block_number,
            "events": [e.to_dict() for e in self.events],
            "fee": self.fee,
            "gas_used": self.gas_used,
            "operation": self.operation,
            "reason": self.reason,
            "sender": str(self.sender),
            "status": self.status,
            "tx_hash": str(self.tx_hash),
        }


@dataclass(frozen=True)
class CallResult:
    value: Any
    execution_cost: int
    fee: int = 0


# ---------------------------------------------------------------------------
# Blocks and consensus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    number: int
    timestamp: int
    parent_hash: Digest32
    tx_hashes: tuple[Digest32, ...]
    state_root: Digest32
    proposer: int
    round: int = 0

    def header(self) -> dict[str, Any]:
        return {
            "number": self.number,
            "parent_hash": str(self.parent_hash),
            "proposer": self.proposer,
            "round": self.round,
            "state_root": str(self.state_root),
            "timestamp": self.timestamp,
            "tx_hashes": [str(h) for h in self.tx_hashes],
        }

    @property
    def hash(self) -> Digest32:
        return keccak256(json.dumps(self.header(), sort_keys=True, separators=(",", ":")).encode())

    def export_line(self) -> str:
        record = self.header()
        record["hash"] = str(self.hash)
        return json.dumps(record, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ValidatorSet:
    validators: tuple[int, ...]

    @classmethod
    def of_size(cls, n: int) -> "ValidatorSet":
        if n < 1:
            raise ValueError("need at least one validator")
        return cls(tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.validators)

    @property
    def f(self) -> int:
        return (self.n - 1) // 3

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    def proposer(self, height: int, round_: int) -> int:
        return self.validators[(height + round_) % self.n]


@dataclass(frozen=True)
class RoundRecord:
    height: int
    round: int
    proposer: int
    proposed: bool
    prepares: int
    commits: int
    committed: bool


@dataclass
class RoundResult:
    block: Block | None
    receipts: list[Receipt] = field(default_factory=list)
    rounds: list[RoundRecord] = field(default_factory=list)

    @property
    def committed(self) -> bool:
        return self.block is not None

    @property
    def failed_rounds(self) -> int:
        return sum(1 for r in self.rounds if not r.committed)


def _tally(vs: ValidatorSet, height: int, round_: int, faults: frozenset[int]) -> RoundRecord:
    proposer = vs.proposer(height, round_)
    if proposer in faults:
        return RoundRecord(height, round_, proposer, False, 0, 0, False)
    honest = [v for v in vs.validators if v not in faults]
    prepares = len(honest)
    # a validator commits only after observing a prepare quorum
    commits = len(honest) if prepares >= vs.quorum else 0
    return RoundRecord(height, round_, proposer, True, prepares, commits, commits >= vs.quorum)


def _state_root(registry: Registry | None) -> Digest32:
    if registry is None:
        return keccak256(b"null")
    return registry.state.root()


# ---------------------------------------------------------------------------
# Ledger
# ---------------------------------------------------------------------------


class Ledger:
    """Single-writer chain: admission queue, consensus rounds, receipts and queries."""

    def __init__(
        self,
        validators: int = 4,
        schedule: GasSchedule = DEFAULT_SCHEDULE,
        genesis_timestamp: int = 0,
        max_rounds: int | None = None,
    ):
        self.validator_set = ValidatorSet.of_size(validators)
        self.schedule = schedule
        self.max_rounds = max_rounds if max_rounds is not None else self.validator_set.n
        self.faults: frozenset[int] = frozenset()
        self.registry: Registry | None = None
        self.creator: Address | None = None
        self.blocks: list[Block] = [
            Block(0, genesis_timestamp, ZERO_DIGEST, (), _state_root(None), self.validator_set.proposer(0, 0))
        ]
        self.pending: list[Transaction] = []
        self.transactions: dict[Digest32, Transaction] = {}
        self.receipts: dict[Digest32, Receipt] = {}
        self.round_log: list[RoundRecord] = []
        self._committed_nonce: dict[Address, int] = {}
        self._pending_nonce: dict[Address, int] = {}

    # -- admission --------------------------------------------------------

    def last_nonce(self, sender: Address) -> int:
        return self._pending_nonce.get(sender, self._committed_nonce.get(sender, 0))

    def submit(self, tx: Transaction) -> Digest32:
        if tx.operation not in TX_OPERATIONS:
            raise LedgerError(f"unknown operation {tx.operation!r}")
        if not tx.signature_valid():
            raise LedgerError("invalid signature")
        expected = self.last_nonce(tx.sender) + 1
        if tx.nonce != expected:
            raise LedgerError(f"bad nonce {tx.nonce} for {tx.sender}, expected {expected}")
        self._pending_nonce[tx.sender] = tx.nonce
        self.pending.append(tx)
        return tx.hash

    def set_faults(self, faults: Iterable[int]) -> None:
        faults = frozenset(faults)
        unknown = faults - set(self.validator_set.validators)
        if unknown:
            raise LedgerError(f"unknown validators {sorted(unknown)}")
        self.faults = faults

    # -- consensus --------------------------------------------------------

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.head.number

    def run_round(
        self,
        clock: int | None = None,
        faults: Iterable[int] | None = None,
        pending: Sequence[Transaction] | None = None,
    ) -> RoundResult:
        """Try to finalise the next block from the pending queue.

        Rounds rotate the proposer until one commits or ``max_rounds`` fail.
        Uncommitted transactions stay queued for the next call.
        """
        fault_set = self.faults if faults is None else frozenset(faults)
        batch = list(self.pending if pending is None else pending)
        height = self.height + 1
        result = RoundResult(None)
        for round_ in range(self.max_rounds):
            record = _tally(self.validator_set, height, round_, fault_set)
            result.rounds.append(record)
            self.round_log.append(record)
            if record.committed:
                timestamp = max(self.head.timestamp, clock if clock is not None else self.head.timestamp + 1)
                result.block, result.receipts = self._commit(height, round_, record.proposer, timestamp, batch)
                break
        return result

    def _commit(
        self, height: int, round_: int, proposer: int, timestamp: int, batch: list[Transaction]
    ) -> tuple[Block, list[Receipt]]:
        receipts = [self._apply(tx, height, timestamp) for tx in batch]
        block = Block(
            height,
            timestamp,
            self.head.hash,
            tuple(tx.hash for tx in batch),
            _state_root(self.registry),
            proposer,
            round_,
        )
        self.blocks.append(block)
        committed = {tx.hash for tx in batch}
        self.pending = [tx for tx in self.pending if tx.hash not in committed]
        for tx in batch:
            self.transactions[tx.hash] = tx
            self._committed_nonce[tx.sender] = tx.nonce
        for receipt in receipts:
            self.receipts[receipt.tx_hash] = receipt
        return block, receipts

    def _apply(self, tx: Transaction, number: int, timestamp: int) -> Receipt:
        trace = GasTrace()
        events: list[Event] = []
        status, reason = "accepted", None
        try:
            if tx.operation == "construct":
                if self.registry is not None:
                    raise Revert(ALREADY_DEPLOYED)
                self.registry = Registry.construct(tx.sender)
                self.creator = tx.sender
                trace.write(fresh=True)  # admins[0]
                trace.write(fresh=True)  # admins.length
            else:
                if self.registry is None:
                    raise Revert(NOT_DEPLOYED)
                self.registry.gas = trace
                args = list(tx.args)
                if tx.operation == "mint_nft":
                    args.append(timestamp)
                events = getattr(self.registry, tx.operation)(tx.sender, *args)
        except Revert as exc:
            status, reason, events = "reverted", exc.reason, []
        return Receipt(
            tx.hash, status, reason, tuple(events), meter(trace, self.schedule), number, tx.sender, tx.operation
        )

    # -- read-only calls --------------------------------------------------

    def call(self, caller: Address, method: str, *args: Any) -> CallResult:
        """Run a view method on committed state. Costs execution gas, never a fee.

        Rejections from the contract propagate as :class:`Revert`.
        """
        if method not in Registry.CALLS:
            raise LedgerError(f"unknown call {method!r}")
        if self.registry is None:
            raise Revert(NOT_DEPLOYED)
        view = Registry(self.creator, self.registry.state.copy())
        if method in ("balance_of", "owner_of"):
            value = getattr(view, method)(*args)
        else:
            value = getattr(view, method)(caller, *args)
        return CallResult(value, meter(view.gas, self.schedule), 0)

    def snapshot(self) -> RegistryState:
        """Immutable-by-convention copy of committed state, for concurrent readers."""
        return self.registry.state.copy() if self.registry is not None else RegistryState()

    # -- queries ----------------------------------------------------------

    def get_block(self, number: int) -> Block:
        if not 0 <= number < len(self.blocks):
            raise LedgerError(f"no block {number}")
        return self.blocks[number]

    def get_receipt(self, tx_hash: Digest32) -> Receipt:
        try:
            return self.receipts[Digest32(tx_hash)]
        except KeyError:
            raise LedgerError(f"no receipt for {tx_hash}") from None

    def iter_receipts(self) -> Iterable[Receipt]:
        for block in self.blocks:
            for h in block.tx_hashes:
                yield self.receipts[h]

    def event_log(self) -> list[tuple[int, Event]]:
        return [(r.block_number, e) for r in self.iter_receipts() for e in r.events]

    def trace_token(self, token_id: Digest32) -> list[tuple[int, Event]]:
        """Chain-ordered events for a token: its TokenCreated plus the Authenticated that preceded it."""
        token_id = Digest32(token_id)
        out = []
        for receipt in self.iter_receipts():
            if any(e.name == "TokenCreated" and e["_tokenId"] == token_id for e in receipt.events):
                for e in receipt.events:
                    if e.name == "Authenticated" or (e.name == "TokenCreated" and e["_tokenId"] == token_id):
                        out.append((receipt.block_number, e))
        return out

    def export_chain(self) -> str:
        return "".join(b.export_line() + "\n" for b in self.blocks)

    def verify_chain(self) -> bool:
        """Replay every block from genesis and check links, numbering and state roots."""
        replica = Ledger(self.validator_set.n, self.schedule, self.blocks[0].timestamp)
        if replica.blocks[0] != self.blocks[0]:
            return False
        for block in self.blocks[1:]:
            if block.parent_hash != replica.head.hash or block.number != replica.height + 1:
                return False
            if block.timestamp < replica.head.timestamp:
                return False
            batch = [self.transactions[h] for h in block.tx_hashes]
            rebuilt, receipts = replica._commit(block.number, block.round, block.proposer, block.timestamp, batch)
            if rebuilt != block or any(r != self.receipts[r.tx_hash] for r in receipts):
                return False
        return True
