"""Keyed primitives: PRFs, keyword key derivation, trapdoor permutation, sealing.

All byte encodings here are normative for the rest of the package: labels are
32 bytes, counters are 8-byte big-endian, and the keyword prefixes for key
derivation are the single bytes 0x31 ("1") and 0x32 ("2") prepended to the
UTF-8 keyword.
"""

from __future__ import annotations

import hmac
import hashlib
import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthenticationError, ParameterError

PRF_BYTES = 32
MIN_KEY_BYTES = 16

KEYWORD_PREFIX_LABEL = b"\x31"
KEYWORD_PREFIX_MASK = b"\x32"


def prf(key: bytes, message: bytes) -> bytes:
    """HMAC-SHA256 tag of `message` under `key`; the F of every label and tag."""
    if not isinstance(key, (bytes, bytearray)) or len(key) < MIN_KEY_BYTES:
        raise ParameterError(f"prf key must be at least {MIN_KEY_BYTES} bytes")
    return hmac.new(bytes(key), bytes(message), hashlib.sha256).digest()


def keystream(key: bytes, nonce: bytes, length: int) -> bytes:
    """First `length` bytes of HMAC-SHA256(key, nonce); the G masking stream.

    One PRF block is enough for every mask in the scheme, so length is capped
    at 32 bytes.
    """
    if length < 0 or length > PRF_BYTES:
        raise ParameterError(f"keystream length must be in [0, {PRF_BYTES}]")
    if len(nonce) != PRF_BYTES:
        raise ParameterError("nonce must be 32 bytes")
    if length == 0:
        return b""
    return prf(key, nonce)[:length]


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ParameterError("xor operands must have equal length")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def encode_counter(c: int) -> bytes:
    """Counters feed the PRF as 8-byte big-endian words."""
    if c < 0:
        raise ParameterError("counter must be non-negative")
    return c.to_bytes(8, "big")


@dataclass(frozen=True)
class MasterKeys:
    """The data owner's three independent secrets.

    `index_key` derives setup-index keys, `add_key` the added-index keys and
    `delete_key` the tombstone tags.
    """

    index_key: bytes
    add_key: bytes
    delete_key: bytes
    lambda_bits: int = 256

    def __post_init__(self):
        if self.lambda_bits % 8 != 0 or self.lambda_bits < 128:
            raise ParameterError("lambda_bits must be a multiple of 8 and >= 128")
        size = self.lambda_bits // 8
        for name in ("index_key", "add_key", "delete_key"):
            if len(getattr(self, name)) != size:
                raise ParameterError(f"{name} must be {size} bytes")

    @classmethod
    def generate(cls, lambda_bits: int = 256) -> "MasterKeys":
        size = lambda_bits // 8
        return cls(secrets.token_bytes(size), secrets.token_bytes(size),
                   secrets.token_bytes(size), lambda_bits)

    def to_bytes(self) -> bytes:
        return self.index_key + self.add_key + self.delete_key

    @classmethod
    def from_bytes(cls, raw: bytes, lambda_bits: int = 256) -> "MasterKeys":
        size = lambda_bits // 8
        if len(raw) != 3 * size:
            raise ParameterError("master key blob has wrong length")
        return cls(raw[:size], raw[size:2 * size], raw[2 * size:], lambda_bits)


@dataclass(frozen=True)
class KeywordKeys:
    """Per-keyword derived secrets.

    setup_label_key/setup_mask_key address and unmask setup-index entries,
    add_label_key/add_mask_key do the same for post-setup additions, and
    tombstone_key tags deletions of a document id under this keyword.
    """

    setup_label_key: bytes
    setup_mask_key: bytes
    add_label_key: bytes
    add_mask_key: bytes
    tombstone_key: bytes

    def fields(self) -> tuple[bytes, bytes, bytes, bytes, bytes]:
        return (self.setup_label_key, self.setup_mask_key,
                self.add_label_key, self.add_mask_key, self.tombstone_key)


def derive_keyword_keys(mk: MasterKeys, keyword: str) -> KeywordKeys:
    """Derive the five per-keyword keys from the master secrets."""
    if not keyword:
        raise ParameterError("keyword must be non-empty")
    w = keyword.encode("utf-8")
    return KeywordKeys(
        setup_label_key=prf(mk.index_key, KEYWORD_PREFIX_LABEL + w),
        setup_mask_key=prf(mk.index_key, KEYWORD_PREFIX_MASK + w),
        add_label_key=prf(mk.add_key, KEYWORD_PREFIX_LABEL + w),
        add_mask_key=prf(mk.add_key, KEYWORD_PREFIX_MASK + w),
        tombstone_key=prf(mk.delete_key, w),
    )


# ---------------------------------------------------------------------------
# Trapdoor permutation (RSA), used by the forward-privacy label chain.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TdpPublic:
    modulus: int
    exponent: int
    modulus_bits: int

    def element_bytes(self) -> int:
        return (self.modulus_bits + 7) // 8

    def encode_element(self, x: int) -> bytes:
        """Fixed-width big-endian encoding; PRF input for chain-point labels."""
        return x.to_bytes(self.element_bytes(), "big")

    def to_bytes(self) -> bytes:
        return (self.modulus_bits.to_bytes(4, "big")
                + self.exponent.to_bytes(4, "big")
                + self.encode_element(self.modulus))

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TdpPublic":
        bits = int.from_bytes(raw[:4], "big")
        exp = int.from_bytes(raw[4:8], "big")
        width = (bits + 7) // 8
        if len(raw) != 8 + width:
            raise ParameterError("malformed trapdoor public key")
        return cls(int.from_bytes(raw[8:], "big"), exp, bits)


@dataclass(frozen=True)
class TdpSecret:
    modulus: int
    private_exponent: int
    modulus_bits: int


@dataclass(frozen=True)
class TdpKeyPair:
    pk: TdpPublic
    sk: TdpSecret


def tdp_keygen(modulus_bits: int = 2048) -> TdpKeyPair:
    """Sample an RSA permutation over [0, modulus)."""
    if modulus_bits < 1024:
        raise ParameterError("modulus_bits must be >= 1024")
    key = rsa.generate_private_key(public_exponent=65537, key_size=modulus_bits)
    numbers = key.private_numbers()
    n = numbers.public_numbers.n
    return TdpKeyPair(
        pk=TdpPublic(n, numbers.public_numbers.e, modulus_bits),
        sk=TdpSecret(n, numbers.d, modulus_bits),
    )


def _check_domain(x: int, modulus: int):
    if not (0 <= x < modulus):
        raise ParameterError("element outside permutation domain")


def tdp_forward(pk: TdpPublic, x: int) -> int:
    """Public direction; anyone can walk a chain backwards with this."""
    _check_domain(x, pk.modulus)
    return pow(x, pk.exponent, pk.modulus)


def tdp_inverse(sk: TdpSecret, x: int) -> int:
    """Private direction; only the key holder can extend a chain."""
    _check_domain(x, sk.modulus)
    return pow(x, sk.private_exponent, sk.modulus)


def tdp_sample(pk: TdpPublic) -> int:
    return secrets.randbelow(pk.modulus)


# ---------------------------------------------------------------------------
# Authenticated sealing (AES-256-GCM) for document payloads, exported owner
# state and broadcast headers.
# ---------------------------------------------------------------------------

_SEAL_NONCE_BYTES = 12


def seal(key: bytes, plaintext: bytes, associated: bytes = b"") -> bytes:
    """Encrypt-and-authenticate; output is nonce || ciphertext+tag."""
    if len(key) != 32:
        raise ParameterError("seal key must be 32 bytes")
    nonce = secrets.token_bytes(_SEAL_NONCE_BYTES)
    return nonce + AESGCM(key).encrypt(nonce, plaintext, associated)


def unseal(key: bytes, blob: bytes, associated: bytes = b"") -> bytes:
    """Inverse of seal; raises AuthenticationError on any tampering."""
    if len(key) != 32:
        raise ParameterError("seal key must be 32 bytes")
    if len(blob) < _SEAL_NONCE_BYTES + 16:
        raise AuthenticationError("sealed blob too short")
    nonce, ct = blob[:_SEAL_NONCE_BYTES], blob[_SEAL_NONCE_BYTES:]
    try:
        return AESGCM(key).decrypt(nonce, ct, associated)
    except InvalidTag as exc:
        raise AuthenticationError("sealed blob failed authentication") from exc
