"""Client-side session flows: owner init, device mapping, user addition, mint/auth.

A secure session is a challenge-response: the initiator draws a 32-byte nonce,
the principal signs it, and the signature is checked against the public key
the principal enrolled with. All ledger writes go through one submission path
that signs, submits and drives a consensus round at the network clock.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Any

from .crypto import ZERO_ADDRESS, Address, Digest32, KeyPair, Signature, derive_address, from_hex, sign, verify
from .ledger import Ledger, Receipt, RoundResult, Transaction
from .registry import DevicePair, Event, RegistryState

__all__ = [
    "DEFAULT_FRESHNESS_WINDOW",
    "DscotNetwork",
    "NftPass",
    "Principal",
    "SessionOutcome",
    "verify_pass",
]

DEFAULT_FRESHNESS_WINDOW = 300
ROLES = ("owner", "admin", "user", "fog", "device")


@dataclass(frozen=True)
class Principal:
    role: str
    keypair: KeyPair
    address: Address
    name: str = ""

    @classmethod
    def create(cls, role: str, keypair: KeyPair, name: str = "") -> "Principal":
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        return cls(role, keypair, keypair.address, name)

    @classmethod
    def from_seed(cls, seed: int, name: str, role: str) -> "Principal":
        return cls.create(role, KeyPair.from_seed(seed, name), name)

    def sign(self, message: bytes) -> Signature:
        return sign(self.keypair, message)


# ---------------------------------------------------------------------------
# NFT pass
# ---------------------------------------------------------------------------

_PASS_FIELDS = ("token_id", "timestamp", "delta_t", "user", "device", "fog", "user_public_key")


@dataclass(frozen=True)
class NftPass:
    token_id: Digest32
    timestamp: int
    delta_t: int
    user: Address
    device: Address
    fog: Address
    user_public_key: bytes
    signature: Signature

    @staticmethod
    def _body(token_id, timestamp, delta_t, user, device, fog, user_public_key) -> dict[str, Any]:
        return {
            "token_id": str(Digest32(token_id)),
            "timestamp": int(timestamp),
            "delta_t": int(delta_t),
            "user": str(Address(user)),
            "device": str(Address(device)),
            "fog": str(Address(fog)),
            "user_public_key": "0x" + bytes(user_public_key).hex(),
        }

    def signed_bytes(self) -> bytes:
        body = self._body(*(getattr(self, f) for f in _PASS_FIELDS))
        return json.dumps(body, separators=(",", ":")).encode()

    @classmethod
    def issue(
        cls, key: KeyPair, token_id: Digest32, timestamp: int, delta_t: int, device: Address, fog: Address
    ) -> "NftPass":
        unsigned = cls(token_id, timestamp, delta_t, key.address, device, fog, key.public_key, Signature(b"", key.address))
        return replace(unsigned, signature=sign(key, unsigned.signed_bytes()))

    def dumps(self) -> str:
        record = self._body(*(getattr(self, f) for f in _PASS_FIELDS))
        record["signature"] = self.signature.to_hex()
        record["signer"] = str(self.signature.signer)
        return json.dumps(record, separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "NftPass":
        d = json.loads(text)
        return cls(
            Digest32(d["token_id"]),
            int(d["timestamp"]),
            int(d["delta_t"]),
            Address(d["user"]),
            Address(d["device"]),
            Address(d["fog"]),
            from_hex(d["user_public_key"]),
            Signature(from_hex(d["signature"]), Address(d["signer"])),
        )


def verify_pass(
    nft_pass: NftPass, state: RegistryState, now: int, freshness_window: int = DEFAULT_FRESHNESS_WINDOW
) -> tuple[bool, str | None]:
    """Return ``(True, None)`` or ``(False, reason)`` for the first failing check.

    Reasons, in check order: ``signature``, ``unknown-token``, ``not-mapped``, ``stale``.
    """
    try:
        key_matches = derive_address(nft_pass.user_public_key) == nft_pass.user
    except ValueError:
        key_matches = False
    if not key_matches or not verify(nft_pass.user_public_key, nft_pass.signed_bytes(), nft_pass.signature):
        return False, "signature"
    if not any(t.token_id == nft_pass.token_id and t.timestamp == nft_pass.timestamp for t in state.tokens):
        return False, "unknown-token"
    if DevicePair(nft_pass.fog, nft_pass.device) not in state.users_devices.get(nft_pass.user, []):
        return False, "not-mapped"
    if now - nft_pass.timestamp > freshness_window:
        return False, "stale"
    return True, None


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------


@dataclass
class SessionOutcome:
    ok: bool
    reason: str | None = None
    events: list[Event] = field(default_factory=list)
    receipts: list[Receipt] = field(default_factory=list)
    rounds: list[RoundResult] = field(default_factory=list)
    nft_pass: NftPass | None = None

    @property
    def failed_rounds(self) -> int:
        return sum(r.failed_rounds for r in self.rounds)


class DscotNetwork:
    """Key directory, logical clock and session driver around one ledger."""

    def __init__(
        self,
        ledger: Ledger | None = None,
        seed: int = 0,
        clock: int = 0,
        clock_step: int = 1,
        freshness_window: int = DEFAULT_FRESHNESS_WINDOW,
    ):
        self.ledger = ledger if ledger is not None else Ledger()
        self.rng = random.Random(seed)
        self.clock = clock
        self.clock_step = clock_step
        self.freshness_window = freshness_window
        self.directory: dict[Address, bytes] = {}
        self._last_auth: dict[Address, int] = {}

    # -- plumbing ---------------------------------------------------------

    def enroll(self, principal: Principal) -> None:
        self.directory[principal.address] = principal.keypair.public_key

    def advance_clock(self, seconds: int) -> None:
        if seconds < 0:
            raise ValueError("clock cannot go backwards")
        self.clock += seconds

    def challenge(self, principal: Principal) -> bool:
        enrolled = self.directory.get(principal.address)
        if enrolled is None:
            return False
        nonce = self.rng.randbytes(32)
        return verify(enrolled, nonce, principal.sign(nonce))

    def _is_admin(self, principal: Principal) -> bool:
        registry = self.ledger.registry
        return registry is not None and principal.address in registry.state.admins

    def transact(self, principal: Principal, operation: str, *args: Any) -> SessionOutcome:
        """Sign, submit and try to finalise one transaction."""
        nonce = self.ledger.last_nonce(principal.address) + 1
        tx = Transaction.create(principal.keypair, operation, args, nonce)
        tx_hash = self.ledger.submit(tx)
        result = self.ledger.run_round(clock=self.clock)
        if not result.committed:
            return SessionOutcome(False, "no-commit", rounds=[result])
        self.clock += self.clock_step
        receipt = next(r for r in result.receipts if r.tx_hash == tx_hash)
        return SessionOutcome(receipt.accepted, receipt.reason, list(receipt.events), [receipt], [result])

    # -- flows ------------------------------------------------------------

    def owner_init(self, owner: Principal) -> SessionOutcome:
        if self.ledger.registry is not None:
            return SessionOutcome(False, "already-initialized")
        self.enroll(owner)
        if not self.challenge(owner):
            return SessionOutcome(False, "owner-verification")
        return self.transact(owner, "construct")

    def approve_session(self, admin: Principal, new_admin: Principal) -> SessionOutcome:
        if not self._is_admin(admin) or not self.challenge(admin):
            return SessionOutcome(False, "not-admin")
        if not self.challenge(new_admin):
            return SessionOutcome(False, "admin-verification")
        return self.transact(admin, "approve", new_admin.address)

    def map_device_session(self, owner: Principal, fog: Principal, device: Principal) -> SessionOutcome:
        if not self._is_admin(owner) or not self.challenge(owner):
            return SessionOutcome(False, "not-admin")
        if fog.address == ZERO_ADDRESS or device.address == ZERO_ADDRESS:
            return SessionOutcome(False, "zero-address")
        if not self.challenge(fog):
            return SessionOutcome(False, "fog-verification")
        if not self.challenge(device):
            return SessionOutcome(False, "device-verification")
        return self.transact(owner, "device_fog_mapping", fog.address, device.address)

    def add_user_session(
        self, owner: Principal, user: Principal, device: Principal, fog: Principal
    ) -> SessionOutcome:
        if not self._is_admin(owner) or not self.challenge(owner):
            return SessionOutcome(False, "not-admin")
        if ZERO_ADDRESS in (user.address, device.address, fog.address):
            return SessionOutcome(False, "zero-address")
        if not self.challenge(user):
            return SessionOutcome(False, "user-verification")
        outcome = self.transact(owner, "user_device_mapping", user.address, device.address, fog.address)
        if outcome.ok and any(e.name == "DeviceDoesNotExist" for e in outcome.events):
            outcome.ok, outcome.reason = False, "DeviceDoesNotExist"
        return outcome

    def mint_auth_session(self, user: Principal, device: Principal, fog: Principal) -> SessionOutcome:
        if ZERO_ADDRESS in (device.address, fog.address):
            return SessionOutcome(False, "zero-address")
        outcome = self.transact(user, "mint_nft", device.address, fog.address)
        if not outcome.ok:
            return outcome
        created = next((e for e in outcome.events if e.name == "TokenCreated"), None)
        if created is None:
            failure = next(e.name for e in outcome.events if e.name in ("NotAuthenticated", "DeviceDoesNotExist"))
            outcome.ok, outcome.reason = False, failure
            return outcome
        timestamp = created["timestamp"]
        previous = self._last_auth.get(user.address)
        self._last_auth[user.address] = timestamp
        delta_t = 0 if previous is None else timestamp - previous
        outcome.nft_pass = NftPass.issue(
            user.keypair, created["_tokenId"], timestamp, delta_t, device.address, fog.address
        )
        return outcome

    def verify(self, nft_pass: NftPass) -> tuple[bool, str | None]:
        return verify_pass(nft_pass, self.ledger.snapshot(), self.clock, self.freshness_window)
