"""The DSCoT registry contract as a Python state machine.

Mutating entry points take the transaction sender and block timestamp, mutate
``Registry.state`` in place, and return the emitted events. Access-control
failures raise :class:`Revert` before any state is touched.

Every storage touch is recorded on ``Registry.gas`` (a :class:`GasTrace`) using
a Solidity-like layout: a dynamic array costs one slot for its length plus one
slot per element word, a ``Devices`` struct is two slots, a ``Token`` struct is
two slots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .crypto import Address, Digest32, encode_packed, keccak256
from .gas import GasTrace

__all__ = [
    "EVENT_ABI",
    "LAST_ADMIN",
    "NOT_ADMIN",
    "DevicePair",
    "DscotMetadata",
    "Event",
    "Registry",
    "RegistryState",
    "Revert",
    "Token",
    "mint_token_id",
    "replay",
    "token_metadata",
]

NOT_ADMIN = "Not an Admin"
LAST_ADMIN = "Cannot remove last admin"


class Revert(Exception):
    """Contract-level rejection; the enclosing transaction is reverted."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

# name -> ((param, type, indexed), ...), in declared parameter order
EVENT_ABI: dict[str, tuple[tuple[str, str, bool], ...]] = {
    "AdminAdded": (("newAdmin", "address", True), ("addingAdmin", "address", True)),
    "AdminAlreadyExists": (("newAdmin", "address", True), ("sender", "address", True)),
    "AdminDeleted": (("newAdmin", "address", True), ("deletingAdmin", "address", True)),
    "FogDeviceMappingAdded": (
        ("fog", "address", True),
        ("device", "address", True),
        ("addingAdmin", "address", True),
    ),
    "FogDeviceAllMappingDeleted": (("fog", "address", True), ("deletingAdmin", "address", True)),
    "DeviceDoesNotExist": (
        ("device", "address", True),
        ("fog", "address", True),
        ("sender", "address", True),
    ),
    "UserDeviceMappingAdded": (
        ("user", "address", True),
        ("device", "address", True),
        ("addingAdmin", "address", True),
        ("fog", "address", True),
    ),
    "UserDeviceAllMappingDeleted": (("user", "address", True), ("deletingAdmin", "address", True)),
    "Authenticated": (("user", "address", True), ("device", "address", True), ("fog", "address", True)),
    "NotAuthenticated": (("user", "address", True),),
    "InvalidUser": (("device", "address", True), ("fog", "address", True), ("sender", "address", True)),
    "TokenCreated": (
        ("_tokenId", "bytes32", True),
        ("User", "address", True),
        ("device", "address", False),
        ("fog", "address", True),
        ("timestamp", "uint256", False),
    ),
}

_MAX_TOPICS = 4  # signature topic + at most three indexed parameters


@dataclass(frozen=True)
class Event:
    name: str
    args: tuple

    @classmethod
    def make(cls, name: str, **kwargs: Any) -> "Event":
        params = EVENT_ABI[name]
        if set(kwargs) != {p for p, _, _ in params}:
            raise TypeError(f"{name} takes {[p for p, _, _ in params]}, got {sorted(kwargs)}")
        values = []
        for param, typ, _ in params:
            value = kwargs[param]
            if typ == "address":
                value = Address(value)
            elif typ == "bytes32":
                value = Digest32(value)
            else:
                value = int(value)
            values.append(value)
        return cls(name, tuple(values))

    def __getitem__(self, param: str) -> Any:
        for (name, _, _), value in zip(EVENT_ABI[self.name], self.args):
            if name == param:
                return value
        raise KeyError(param)

    def get(self, param: str, default: Any = None) -> Any:
        try:
            return self[param]
        except KeyError:
            return default

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"event": self.name}
        for (param, _, _), value in zip(EVENT_ABI[self.name], self.args):
            out[param] = value if isinstance(value, int) else str(value)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Event":
        body = {k: v for k, v in data.items() if k != "event"}
        return cls.make(data["event"], **body)

    def log_shape(self) -> tuple[int, int]:
        """(topics, data bytes) as the event would be logged."""
        indexed = sum(1 for _, _, idx in EVENT_ABI[self.name] if idx)
        topics = min(1 + indexed, _MAX_TOPICS)
        data_words = len(self.args) - (topics - 1)
        return topics, 32 * data_words

    def __str__(self) -> str:
        return f"{self.name}({', '.join(str(a) for a in self.args)})"


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DevicePair:
    fog: Address
    device: Address


@dataclass(frozen=True)
class Token:
    token_id: Digest32
    timestamp: int
    owner: Address


@dataclass
class RegistryState:
    admins: list[Address] = field(default_factory=list)
    fog_devices: dict[Address, list[Address]] = field(default_factory=dict)
    users_devices: dict[Address, list[DevicePair]] = field(default_factory=dict)
    tokens: list[Token] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        # cleared mappings are indistinguishable from never-set ones, so empties are dropped
        return {
            "admins": [str(a) for a in self.admins],
            "fog_devices": {
                str(fog): [str(d) for d in devs] for fog, devs in self.fog_devices.items() if devs
            },
            "users_devices": {
                str(user): [{"device": str(p.device), "fog": str(p.fog)} for p in pairs]
                for user, pairs in self.users_devices.items()
                if pairs
            },
            "tokens": [
                {"owner": str(t.owner), "timestamp": t.timestamp, "token_id": str(t.token_id)}
                for t in self.tokens
            ],
        }

    def dumps(self) -> str:
        """Canonical text form: sorted keys, hex addresses, no insignificant whitespace."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "RegistryState":
        data = json.loads(text)
        return cls(
            admins=[Address(a) for a in data["admins"]],
            fog_devices={Address(f): [Address(d) for d in ds] for f, ds in data["fog_devices"].items()},
            users_devices={
                Address(u): [DevicePair(Address(p["fog"]), Address(p["device"])) for p in ps]
                for u, ps in data["users_devices"].items()
            },
            tokens=[
                Token(Digest32(t["token_id"]), int(t["timestamp"]), Address(t["owner"]))
                for t in data["tokens"]
            ],
        )

    def root(self) -> Digest32:
        return keccak256(self.dumps().encode())

    def copy(self) -> "RegistryState":
        # element types are immutable, so copying the containers is enough
        return RegistryState(
            admins=list(self.admins),
            fog_devices={k: list(v) for k, v in self.fog_devices.items()},
            users_devices={k: list(v) for k, v in self.users_devices.items()},
            tokens=list(self.tokens),
        )


def mint_token_id(device: Address, fog: Address, sender: Address, timestamp: int) -> Digest32:
    return keccak256(encode_packed([device, fog, sender], timestamp))


# ---------------------------------------------------------------------------
# Contract
# ---------------------------------------------------------------------------


class Registry:
    """Admin, fog/device, user/device mappings and NFT minting."""

    MUTATING = (
        "approve",
        "del_admin",
        "device_fog_mapping",
        "del_dev",
        "user_device_mapping",
        "del_user",
        "mint_nft",
    )
    CALLS = (
        "no_of_admins",
        "admin_add",
        "users_devices",
        "fog_devices",
        "tokens_issued",
        "balance_of",
        "owner_of",
    )

    def __init__(self, creator: Address, state: RegistryState | None = None):
        self.state = state if state is not None else RegistryState(admins=[Address(creator)])
        self.gas = GasTrace()

    @classmethod
    def construct(cls, creator: Address) -> "Registry":
        return cls(creator)

    # -- helpers ----------------------------------------------------------

    def _emit(self, out: list[Event], name: str, **kwargs: Any) -> None:
        event = Event.make(name, **kwargs)
        self.gas.log(*event.log_shape())
        out.append(event)

    def _scan(self, items: Iterable[Any]) -> Iterator[Any]:
        # every element visit costs one loop iteration plus one slot read
        for item in items:
            self.gas.loop()
            self.gas.read()
            yield item

    def _only_admin(self, sender: Address) -> None:
        self.gas.read()
        for admin in self._scan(self.state.admins):
            if admin == sender:
                return
        raise Revert(NOT_ADMIN)

    def _push(self, length: int, slots: int) -> None:
        for _ in range(slots):
            self.gas.write(fresh=True)
        self.gas.write(fresh=length == 0)

    def _clear(self, length: int, slots: int) -> None:
        for _ in range(length * slots):
            self.gas.write(fresh=False)
        self.gas.write(fresh=False)

    def _device_exists(self, fog: Address, device: Address) -> bool:
        self.gas.read()
        for d in self._scan(self.state.fog_devices.get(fog, ())):
            if d == device:
                return True
        return False

    # -- admin management -------------------------------------------------

    def approve(self, sender: Address, new_admin: Address, token_id: int | None = None) -> list[Event]:
        # token_id mirrors the ERC-721 approve(_approved, _tokenId) shape and is unused
        events: list[Event] = []
        self._only_admin(sender)
        self.gas.read()
        for admin in self._scan(self.state.admins):
            if admin == new_admin:
                self._emit(events, "AdminAlreadyExists", newAdmin=new_admin, sender=sender)
                return events
        self._push(len(self.state.admins), 1)
        self.state.admins.append(Address(new_admin))
        self._emit(events, "AdminAdded", newAdmin=new_admin, addingAdmin=sender)
        return events

    def del_admin(self, sender: Address, admin: Address) -> list[Event]:
        events: list[Event] = []
        self._only_admin(sender)
        admins = self.state.admins
        self.gas.read()
        index = None
        for i, a in enumerate(self._scan(admins)):
            if a == admin:
                index = i
                break
        if index is None:
            return events
        if len(admins) == 1:
            raise Revert(LAST_ADMIN)
        # order-preserving removal: shift the tail down, zero the last slot
        for _ in range(index + 1, len(admins)):
            self.gas.read()
            self.gas.write(fresh=False)
        self.gas.write(fresh=False)
        self.gas.write(fresh=False)
        del admins[index]
        self._emit(events, "AdminDeleted", newAdmin=admin, deletingAdmin=sender)
        return events

    # -- fog / device mapping ---------------------------------------------

    def device_fog_mapping(self, sender: Address, fog: Address, device: Address) -> list[Event]:
        events: list[Event] = []
        self._only_admin(sender)
        devices = self.state.fog_devices.setdefault(Address(fog), [])
        self.gas.read()
        self._push(len(devices), 1)
        devices.append(Address(device))
        self._emit(events, "FogDeviceMappingAdded", fog=fog, device=device, addingAdmin=sender)
        return events

    def del_dev(self, sender: Address, fog: Address) -> list[Event]:
        events: list[Event] = []
        self._only_admin(sender)
        devices = self.state.fog_devices.pop(Address(fog), [])
        self.gas.read()
        self._clear(len(devices), 1)
        self._emit(events, "FogDeviceAllMappingDeleted", fog=fog, deletingAdmin=sender)
        return events

    # -- user / device mapping --------------------------------------------

    def user_device_mapping(
        self, sender: Address, user: Address, device: Address, fog: Address
    ) -> list[Event]:
        events: list[Event] = []
        self._only_admin(sender)
        if not self._device_exists(fog, device):
            self._emit(events, "DeviceDoesNotExist", device=device, fog=fog, sender=sender)
            return events
        pairs = self.state.users_devices.setdefault(Address(user), [])
        self.gas.read()
        self._push(len(pairs), 2)
        pairs.append(DevicePair(Address(fog), Address(device)))
        self._emit(events, "UserDeviceMappingAdded", user=user, device=device, addingAdmin=sender, fog=fog)
        return events

    def del_user(self, sender: Address, user: Address) -> list[Event]:
        events: list[Event] = []
        self._only_admin(sender)
        pairs = self.state.users_devices.pop(Address(user), [])
        self.gas.read()
        self._clear(len(pairs), 2)
        self._emit(events, "UserDeviceAllMappingDeleted", user=user, deletingAdmin=sender)
        return events

    # -- minting ----------------------------------------------------------

    def mint_nft(self, sender: Address, device: Address, fog: Address, block_timestamp: int) -> list[Event]:
        """Authenticate ``sender`` against its own mapping list and mint on success.

        Open to any signed sender: the check is that the sender was mapped to
        (fog, device) by an admin, so no admin guard applies here.
        """
        events: list[Event] = []
        if not self._device_exists(fog, device):
            self._emit(events, "DeviceDoesNotExist", device=device, fog=fog, sender=sender)
            return events

        auth = False
        self.gas.read()
        for pair in self._scan(self.state.users_devices.get(sender, ())):
            if pair.device == device:
                self.gas.read()  # .fog of the matched struct
                if pair.fog == fog:
                    auth = True
                    break
        if not auth:
            self._emit(events, "NotAuthenticated", user=sender)
            return events

        packed = encode_packed([device, fog, sender], block_timestamp)
        self.gas.hash(len(packed))
        token_id = keccak256(packed)
        self._emit(events, "Authenticated", user=sender, device=device, fog=fog)

        tokens = self.state.tokens
        self.gas.read()
        self._push(len(tokens), 2)
        owned = self._balance(sender)
        self.gas.write(fresh=not any(t.token_id == token_id for t in tokens))  # owner slot
        self.gas.write(fresh=owned == 0)  # balance slot
        tokens.append(Token(token_id, block_timestamp, Address(sender)))
        self._emit(
            events,
            "TokenCreated",
            _tokenId=token_id,
            User=sender,
            device=device,
            fog=fog,
            timestamp=block_timestamp,
        )
        return events

    # -- read-only calls --------------------------------------------------

    def _balance(self, owner: Address) -> int:
        self.gas.read()
        return sum(1 for t in self.state.tokens if t.owner == owner)

    def no_of_admins(self, caller: Address) -> int:
        self._only_admin(caller)
        self.gas.read()
        return len(self.state.admins)

    def admin_add(self, caller: Address) -> list[Address]:
        self._only_admin(caller)
        self.gas.read()
        return list(self._scan(self.state.admins))

    def users_devices(self, caller: Address, user: Address, index: int) -> DevicePair:
        self._only_admin(caller)
        pairs = self.state.users_devices.get(Address(user), [])
        self.gas.read()
        if not 0 <= index < len(pairs):
            raise Revert("index out of range")
        self.gas.read(2)
        return pairs[index]

    def fog_devices(self, caller: Address, fog: Address, index: int) -> Address:
        self._only_admin(caller)
        devices = self.state.fog_devices.get(Address(fog), [])
        self.gas.read()
        if not 0 <= index < len(devices):
            raise Revert("index out of range")
        self.gas.read()
        return devices[index]

    def tokens_issued(self, caller: Address) -> list[Token]:
        self._only_admin(caller)
        self.gas.read()
        out = []
        for token in self._scan(self.state.tokens):
            self.gas.read()  # second struct slot
            out.append(token)
        return out

    def balance_of(self, owner: Address) -> int:
        return self._balance(Address(owner))

    def owner_of(self, token_id: Digest32) -> Address:
        self.gas.read()
        for token in self.state.tokens:
            if token.token_id == token_id:
                return token.owner
        raise Revert("unknown token")


# ---------------------------------------------------------------------------
# Event sourcing
# ---------------------------------------------------------------------------


def replay(creator: Address, events: Iterable[Event]) -> RegistryState:
    """Rebuild registry state by folding an event stream from construction."""
    state = RegistryState(admins=[Address(creator)])
    for ev in events:
        if ev.name == "AdminAdded":
            state.admins.append(ev["newAdmin"])
        elif ev.name == "AdminDeleted":
            state.admins.remove(ev["newAdmin"])
        elif ev.name == "FogDeviceMappingAdded":
            state.fog_devices.setdefault(ev["fog"], []).append(ev["device"])
        elif ev.name == "FogDeviceAllMappingDeleted":
            state.fog_devices.pop(ev["fog"], None)
        elif ev.name == "UserDeviceMappingAdded":
            state.users_devices.setdefault(ev["user"], []).append(DevicePair(ev["fog"], ev["device"]))
        elif ev.name == "UserDeviceAllMappingDeleted":
            state.users_devices.pop(ev["user"], None)
        elif ev.name == "TokenCreated":
            state.tokens.append(Token(ev["_tokenId"], ev["timestamp"], ev["User"]))
    return state


@dataclass(frozen=True)
class DscotMetadata:
    """Per-token metadata record: owner, token id, user/device/fog ids, T and ΔT."""

    owner: Address
    token_id: Digest32
    user_id: Address
    device_id: Address
    fog_id: Address
    timestamp: int
    delta_t: int


def token_metadata(owner: Address, events: Iterable[Event]) -> list[DscotMetadata]:
    """One record per TokenCreated; ΔT is measured against the same user's previous token."""
    last_seen: dict[Address, int] = {}
    out = []
    for ev in events:
        if ev.name != "TokenCreated":
            continue
        user, ts = ev["User"], ev["timestamp"]
        delta = ts - last_seen[user] if user in last_seen else 0
        last_seen[user] = ts
        out.append(DscotMetadata(Address(owner), ev["_tokenId"], user, ev["device"], ev["fog"], ts, delta))
    return out
