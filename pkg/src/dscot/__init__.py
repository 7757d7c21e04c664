"""Deterministic simulator of an NFT-based IoT authentication registry on a private IBFT ledger."""

from .crypto import Address, Digest32, KeyPair, derive_address, encode_packed, keccak256, sign, verify
from .gas import DEFAULT_SCHEDULE, GasSchedule, GasTrace, meter
from .ledger import Block, Ledger, LedgerError, Receipt, Transaction, ValidatorSet
from .registry import DevicePair, Event, Registry, RegistryState, Revert, Token, replay
from .scenario import RunTrace, ScenarioError, ScenarioScript, parse, run
from .sessions import DscotNetwork, NftPass, Principal, SessionOutcome, verify_pass

__all__ = [
    "Address",
    "Block",
    "DEFAULT_SCHEDULE",
    "derive_address",
    "DevicePair",
    "Digest32",
    "DscotNetwork",
    "encode_packed",
    "Event",
    "GasSchedule",
    "GasTrace",
    "keccak256",
    "KeyPair",
    "Ledger",
    "LedgerError",
    "meter",
    "NftPass",
    "parse",
    "Principal",
    "Receipt",
    "Registry",
    "RegistryState",
    "replay",
    "Revert",
    "run",
    "RunTrace",
    "ScenarioError",
    "ScenarioScript",
    "SessionOutcome",
    "sign",
    "Token",
    "Transaction",
    "ValidatorSet",
    "verify",
    "verify_pass",
]

__version__ = "0.1.0"
