"""Hashing, packed encoding, keys and signatures.

keccak-256 here is the pre-standard Keccak (padding byte 0x01), which is what
contract platforms call ``keccak256``. It differs from ``hashlib.sha3_256``.

Signatures use deterministic ECDSA (RFC 6979) over secp256k1 with the message
prehashed by keccak-256. Addresses are the last 20 bytes of the keccak-256 of
the uncompressed public key with its 0x04 prefix stripped.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, utils

__all__ = [
    "Address",
    "Digest32",
    "KeyPair",
    "Signature",
    "ZERO_ADDRESS",
    "ZERO_DIGEST",
    "derive_address",
    "encode_packed",
    "from_hex",
    "keccak256",
    "sign",
    "to_hex",
    "verify",
]

# ---------------------------------------------------------------------------
# Keccak-f[1600]
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1

_RC = (
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
)

_RATE = 136  # bytes, for 256-bit output (capacity 512)

# One round = theta, rho+pi, chi, iota, unrolled over the 25 lanes (x + 5*y).
def _keccak_f(s: list[int]) -> None:
    (a00, a01, a02, a03, a04, a05, a06, a07, a08, a09, a10, a11, a12, a13, a14, a15, a16, a17, a18, a19, a20, a21, a22, a23, a24) = s
    for rc in _RC:
        c0 = a00 ^ a05 ^ a10 ^ a15 ^ a20
        c1 = a01 ^ a06 ^ a11 ^ a16 ^ a21
        c2 = a02 ^ a07 ^ a12 ^ a17 ^ a22
        c3 = a03 ^ a08 ^ a13 ^ a18 ^ a23
        c4 = a04 ^ a09 ^ a14 ^ a19 ^ a24
        d0 = c4 ^ (((c1 << 1) | (c1 >> 63)) & _MASK)
        d1 = c0 ^ (((c2 << 1) | (c2 >> 63)) & _MASK)
        d2 = c1 ^ (((c3 << 1) | (c3 >> 63)) & _MASK)
        d3 = c2 ^ (((c4 << 1) | (c4 >> 63)) & _MASK)
        d4 = c3 ^ (((c0 << 1) | (c0 >> 63)) & _MASK)
        b00 = (a00 ^ d0)
        t = (a01 ^ d1)
        b10 = ((t << 1) | (t >> 63)) & _MASK
        t = (a02 ^ d2)
        b20 = ((t << 62) | (t >> 2)) & _MASK
        t = (a03 ^ d3)
        b05 = ((t << 28) | (t >> 36)) & _MASK
        t = (a04 ^ d4)
        b15 = ((t << 27) | (t >> 37)) & _MASK
        t = (a05 ^ d0)
        b16 = ((t << 36) | (t >> 28)) & _MASK
        t = (a06 ^ d1)
        b01 = ((t << 44) | (t >> 20)) & _MASK
        t = (a07 ^ d2)
        b11 = ((t << 6) | (t >> 58)) & _MASK
        t = (a08 ^ d3)
        b21 = ((t << 55) | (t >> 9)) & _MASK
        t = (a09 ^ d4)
        b06 = ((t << 20) | (t >> 44)) & _MASK
        t = (a10 ^ d0)
        b07 = ((t << 3) | (t >> 61)) & _MASK
        t = (a11 ^ d1)
        b17 = ((t << 10) | (t >> 54)) & _MASK
        t = (a12 ^ d2)
        b02 = ((t << 43) | (t >> 21)) & _MASK
        t = (a13 ^ d3)
        b12 = ((t << 25) | (t >> 39)) & _MASK
        t = (a14 ^ d4)
        b22 = ((t << 39) | (t >> 25)) & _MASK
        t = (a15 ^ d0)
        b23 = ((t << 41) | (t >> 23)) & _MASK
        t = (a16 ^ d1)
        b08 = ((t << 45) | (t >> 19)) & _MASK
        t = (a17 ^ d2)
        b18 = ((t << 15) | (t >> 49)) & _MASK
        t = (a18 ^ d3)
        b03 = ((t << 21) | (t >> 43)) & _MASK
        t = (a19 ^ d4)
        b13 = ((t << 8) | (t >> 56)) & _MASK
        t = (a20 ^ d0)
        b14 = ((t << 18) | (t >> 46)) & _MASK
        t = (a21 ^ d1)
        b24 = ((t << 2) | (t >> 62)) & _MASK
        t = (a22 ^ d2)
        b09 = ((t << 61) | (t >> 3)) & _MASK
        t = (a23 ^ d3)
        b19 = ((t << 56) | (t >> 8)) & _MASK
        t = (a24 ^ d4)
        b04 = ((t << 14) | (t >> 50)) & _MASK
        a00 = b00 ^ (~b01 & b02)
        a01 = b01 ^ (~b02 & b03)
        a02 = b02 ^ (~b03 & b04)
        a03 = b03 ^ (~b04 & b00)
        a04 = b04 ^ (~b00 & b01)
        a05 = b05 ^ (~b06 & b07)
        a06 = b06 ^ (~b07 & b08)
        a07 = b07 ^ (~b08 & b09)
        a08 = b08 ^ (~b09 & b05)
        a09 = b09 ^ (~b05 & b06)
        a10 = b10 ^ (~b11 & b12)
        a11 = b11 ^ (~b12 & b13)
        a12 = b12 ^ (~b13 & b14)
        a13 = b13 ^ (~b14 & b10)
        a14 = b14 ^ (~b10 & b11)
        a15 = b15 ^ (~b16 & b17)
        a16 = b16 ^ (~b17 & b18)
        a17 = b17 ^ (~b18 & b19)
        a18 = b18 ^ (~b19 & b15)
        a19 = b19 ^ (~b15 & b16)
        a20 = b20 ^ (~b21 & b22)
        a21 = b21 ^ (~b22 & b23)
        a22 = b22 ^ (~b23 & b24)
        a23 = b23 ^ (~b24 & b20)
        a24 = b24 ^ (~b20 & b21)
        a00 ^= rc
    s[:] = (a00, a01, a02, a03, a04, a05, a06, a07, a08, a09, a10, a11, a12, a13, a14, a15, a16, a17, a18, a19, a20, a21, a22, a23, a24)


def _keccak256_bytes(data: bytes) -> bytes:
    padded = bytearray(data)
    pad_len = _RATE - (len(padded) % _RATE)
    padded += b"\x00" * pad_len
    padded[len(data)] ^= 0x01
    padded[-1] ^= 0x80

    state = [0] * 25
    for off in range(0, len(padded), _RATE):
        block = padded[off:off + _RATE]
        for i in range(_RATE // 8):
            state[i] ^= int.from_bytes(block[8 * i:8 * i + 8], "little")
        _keccak_f(state)
    return b"".join(lane.to_bytes(8, "little") for lane in state[:4])


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


def to_hex(raw: bytes) -> str:
    return "0x" + raw.hex()


def from_hex(text: str) -> bytes:
    """Decode ``0x``-prefixed hex (case-insensitive); raise ValueError otherwise."""
    if not isinstance(text, str) or text[:2] not in ("0x", "0X"):
        raise ValueError(f"hex value must start with 0x: {text!r}")
    body = text[2:]
    if len(body) % 2 or any(c not in "0123456789abcdefABCDEF" for c in body):
        raise ValueError(f"malformed hex: {text!r}")
    return bytes.fromhex(body)


class _FixedBytes(bytes):
    SIZE = 0

    def __new__(cls, value: bytes | bytearray | str):
        if isinstance(value, str):
            value = from_hex(value)
        if len(value) != cls.SIZE:
            raise ValueError(f"{cls.__name__} needs {cls.SIZE} bytes, got {len(value)}")
        return super().__new__(cls, value)

    @property
    def hex0x(self) -> str:
        return "0x" + self.hex()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.hex0x})"

    def __str__(self) -> str:
        return self.hex0x


class Digest32(_FixedBytes):
    """A 32-byte hash value (token ids, tx hashes, state roots)."""

    SIZE = 32


class Address(_FixedBytes):
    """20-byte account identifier, rendered as lowercase 0x-hex."""

    SIZE = 20


ZERO_ADDRESS = Address(bytes(20))
ZERO_DIGEST = Digest32(bytes(32))


def keccak256(data: bytes) -> Digest32:
    return Digest32(_keccak256_bytes(bytes(data)))


def encode_packed(addresses: Sequence[Address], timestamp: int) -> bytes:
    """Concatenate raw 20-byte addresses followed by a uint256 big-endian timestamp."""
    if not addresses:
        raise ValueError("encode_packed needs at least one address")
    if not 0 <= timestamp < 1 << 256:
        raise ValueError("timestamp out of uint256 range")
    out = b"".join(bytes(Address(a)) for a in addresses)
    return out + timestamp.to_bytes(32, "big")


# ---------------------------------------------------------------------------
# Keys and signatures
# ---------------------------------------------------------------------------

_CURVE = ec.SECP256K1()
_CURVE_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_ALGO = ec.ECDSA(utils.Prehashed(hashes.SHA256()), deterministic_signing=True)


def _load_public(public_key: bytes) -> ec.EllipticCurvePublicKey:
    if len(public_key) != 65 or public_key[0] != 0x04:
        raise ValueError("public key must be 65-byte uncompressed SEC1 point")
    return ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, public_key)


def derive_address(public_key: bytes) -> Address:
    """Last 20 bytes of keccak256 over the 64-byte (x, y) point encoding."""
    _load_public(public_key)  # rejects off-curve and malformed keys
    return Address(bytes(keccak256(public_key[1:]))[-20:])


@dataclass(frozen=True)
class KeyPair:
    private_key: bytes
    public_key: bytes

    @classmethod
    def from_private(cls, private_key: bytes | int) -> "KeyPair":
        scalar = private_key if isinstance(private_key, int) else int.from_bytes(private_key, "big")
        if not 0 < scalar < _CURVE_ORDER:
            raise ValueError("private scalar out of range")
        key = ec.derive_private_key(scalar, _CURVE)
        pub = key.public_key().public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
        )
        return cls(scalar.to_bytes(32, "big"), pub)

    @classmethod
    def from_seed(cls, seed: int, name: str) -> "KeyPair":
        """Deterministic key for a named principal under a run seed."""
        material = seed.to_bytes(32, "big") + name.encode("utf-8")
        counter = 0
        while True:
            scalar = int.from_bytes(keccak256(material + counter.to_bytes(4, "big")), "big")
            if 0 < scalar < _CURVE_ORDER:
                return cls.from_private(scalar)
            counter += 1  # astronomically rare

    @property
    def address(self) -> Address:
        return derive_address(self.public_key)

    def _private(self) -> ec.EllipticCurvePrivateKey:
        return ec.derive_private_key(int.from_bytes(self.private_key, "big"), _CURVE)


@dataclass(frozen=True)
class Signature:
    """64-byte r||s signature plus the address that claims to have produced it."""

    bytes: bytes
    signer: Address

    def to_hex(self) -> str:
        return to_hex(self.bytes)


def sign(key: KeyPair, message: bytes) -> Signature:
    der = key._private().sign(bytes(keccak256(message)), _ALGO)
    r, s = utils.decode_dss_signature(der)
    return Signature(r.to_bytes(32, "big") + s.to_bytes(32, "big"), key.address)


def verify(public_key: bytes, message: bytes, signature: Signature) -> bool:
    """True iff ``signature`` was made over ``message`` by the holder of ``public_key``.

    The signer address carried in the signature must also match the key.
    Malformed keys or signatures give False rather than raising.
    """
    try:
        pub = _load_public(public_key)
        if derive_address(public_key) != signature.signer:
            return False
        raw = signature.bytes
        if len(raw) != 64:
            return False
        der = utils.encode_dss_signature(int.from_bytes(raw[:32], "big"), int.from_bytes(raw[32:], "big"))
        pub.verify(der, bytes(keccak256(message)), _ALGO)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True
