"""Normative byte formats: transaction payloads, tokens and canonical encoding.

Every payload starts with a one-byte opcode. Record layouts are fixed-width
where the scheme fixes widths (labels and nonces are 32 bytes, counters 8-byte
big-endian); variable parts carry explicit length prefixes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from . import crypto
from .errors import ParameterError
from .params import SchemeParams

OP_SETUP = 0x01
OP_SEARCH = 0x02
OP_ADD = 0x03
OP_DELETE = 0x04
OP_MU_STORE = 0x05
OP_MU_SEARCH = 0x06

OPCODE_NAMES = {
    OP_SETUP: "SETUP",
    OP_SEARCH: "SEARCH",
    OP_ADD: "ADD",
    OP_DELETE: "DELETE",
    OP_MU_STORE: "MU_STORE",
    OP_MU_SEARCH: "MU_SEARCH",
}

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")

SETUP_RECORD_BYTES = 96  # label(32) | masked padded to 32 | nonce(32)


class Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ParameterError("truncated payload")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def done(self):
        if self.pos != len(self.raw):
            raise ParameterError("trailing bytes in payload")


# ---------------------------------------------------------------------------
# Search token
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchToken:
    """Everything the contract ever learns about one query transaction."""

    keys: crypto.KeywordKeys
    counter: int
    fp_public: crypto.TdpPublic | None = None
    fp_head: int | None = None  # newest chain point of the added index, if any

    def query_key(self) -> bytes:
        """Stable per-keyword fingerprint; keys only, so retries and the
        remaining transactions of one query land in the same log slot."""
        return hashlib.sha256(b"".join(self.keys.fields())).digest()


def encode_token(token: SearchToken) -> bytes:
    out = [b"".join(token.keys.fields()), crypto.encode_counter(token.counter)]
    if token.fp_public is None:
        out.append(b"\x00")
    else:
        pk_bytes = token.fp_public.to_bytes()
        out.append(b"\x01")
        out.append(_U16.pack(len(pk_bytes)))
        out.append(pk_bytes)
        if token.fp_head is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01")
            out.append(token.fp_public.encode_element(token.fp_head))
    return b"".join(out)


def _decode_token(rd: Reader) -> SearchToken:
    keys = crypto.KeywordKeys(*(rd.take(32) for _ in range(5)))
    counter = int.from_bytes(rd.take(8), "big")
    fp_public = None
    fp_head = None
    if rd.take(1) == b"\x01":
        fp_public = crypto.TdpPublic.from_bytes(rd.take(rd.u16()))
        if rd.take(1) == b"\x01":
            fp_head = int.from_bytes(rd.take(fp_public.element_bytes()), "big")
    return SearchToken(keys, counter, fp_public, fp_head)


def mask_token(raw_token: bytes, mask: bytes) -> bytes:
    """XOR the five 32-byte key fields with a shared 32-byte mask.

    The counter and any trailing chain-point material are public protocol
    state and stay in the clear.
    """
    if len(mask) != 32:
        raise ParameterError("token mask must be 32 bytes")
    if len(raw_token) < 168:
        raise ParameterError("token too short")
    masked = bytearray(raw_token)
    for i in range(5):
        field = crypto.xor_bytes(bytes(masked[i * 32:(i + 1) * 32]), mask)
        masked[i * 32:(i + 1) * 32] = field
    return bytes(masked)


# ---------------------------------------------------------------------------
# Payload encoders
# ---------------------------------------------------------------------------

def encode_setup_payload(entries, params: SchemeParams) -> bytes:
    out = [bytes([OP_SETUP]), _U32.pack(len(entries))]
    for e in entries:
        if len(e.masked) != params.packed_width:
            raise ParameterError("entry width does not match parameters")
        out.append(e.label)
        out.append(e.masked.ljust(32, b"\x00"))
        out.append(e.nonce)
    return b"".join(out)


def encode_search_payload(token: SearchToken) -> bytes:
    return bytes([OP_SEARCH]) + encode_token(token)


@dataclass(frozen=True)
class AddTuple:
    label: bytes          # 32B address in the added index
    masked_id: bytes      # id XOR keystream, id_width bytes
    nonce: bytes          # 32B
    tombstone_tag: bytes  # 32B deletion tag for this (keyword, id) pair


def encode_add_payload(tuples: list[AddTuple], params: SchemeParams) -> bytes:
    out = [bytes([OP_ADD]), _U32.pack(len(tuples))]
    for t in tuples:
        if (len(t.label) != 32 or len(t.nonce) != 32 or len(t.tombstone_tag) != 32
                or len(t.masked_id) != params.id_width):
            raise ParameterError("malformed add tuple")
        out.extend((t.label, t.masked_id, t.nonce, t.tombstone_tag))
    return b"".join(out)


def encode_delete_payload(tags: list[bytes]) -> bytes:
    out = [bytes([OP_DELETE]), _U32.pack(len(tags))]
    for tag in tags:
        if len(tag) != 32:
            raise ParameterError("tombstone tags are 32 bytes")
        out.append(tag)
    return b"".join(out)


def encode_mu_store_payload(group_secret: bytes, members: list[int],
                            header: list[tuple[int, bytes]],
                            registered_queries: list[bytes] = ()) -> bytes:
    if len(group_secret) != 32:
        raise ParameterError("group secret must be 32 bytes")
    out = [bytes([OP_MU_STORE]), group_secret, _U32.pack(len(members))]
    for m in sorted(members):
        out.append(_U32.pack(m))
    out.append(_U32.pack(len(header)))
    for user_id, wrapped in header:
        out.append(_U32.pack(user_id))
        out.append(_U16.pack(len(wrapped)))
        out.append(wrapped)
    out.append(_U32.pack(len(registered_queries)))
    for qk in registered_queries:
        if len(qk) != 32:
            raise ParameterError("registered query keys are 32 bytes")
        out.append(qk)
    return b"".join(out)


def encode_mu_search_payload(masked_token: bytes) -> bytes:
    return bytes([OP_MU_SEARCH]) + masked_token


# ---------------------------------------------------------------------------
# Payload decoding (contract side)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetupPayload:
    records: list[tuple[bytes, bytes, bytes]]  # (label, masked32, nonce)


@dataclass(frozen=True)
class SearchPayload:
    token: SearchToken


@dataclass(frozen=True)
class AddPayload:
    tuples: list[AddTuple]


@dataclass(frozen=True)
class DeletePayload:
    tags: list[bytes]


@dataclass(frozen=True)
class MuStorePayload:
    group_secret: bytes
    members: list[int]
    header: list[tuple[int, bytes]]
    registered_queries: list[bytes]


@dataclass(frozen=True)
class MuSearchPayload:
    masked_token: bytes


def decode_payload(raw: bytes, params: SchemeParams):
    if not raw:
        raise ParameterError("empty payload")
    op = raw[0]
    rd = Reader(raw[1:])
    if op == OP_SETUP:
        records = []
        for _ in range(rd.u32()):
            records.append((rd.take(32), rd.take(32), rd.take(32)))
        rd.done()
        return op, SetupPayload(records)
    if op == OP_SEARCH:
        token = _decode_token(rd)
        rd.done()
        return op, SearchPayload(token)
    if op == OP_ADD:
        tuples = []
        for _ in range(rd.u32()):
            tuples.append(AddTuple(rd.take(32), rd.take(params.id_width),
                                   rd.take(32), rd.take(32)))
        rd.done()
        return op, AddPayload(tuples)
    if op == OP_DELETE:
        tags = [rd.take(32) for _ in range(rd.u32())]
        rd.done()
        return op, DeletePayload(tags)
    if op == OP_MU_STORE:
        secret = rd.take(32)
        members = [rd.u32() for _ in range(rd.u32())]
        header = []
        for _ in range(rd.u32()):
            user_id = rd.u32()
            header.append((user_id, rd.take(rd.u16())))
        registered = [rd.take(32) for _ in range(rd.u32())]
        rd.done()
        return op, MuStorePayload(secret, members, header, registered)
    if op == OP_MU_SEARCH:
        return op, MuSearchPayload(raw[1:])
    raise ParameterError(f"unknown opcode {op:#x}")


def payload_entry_count(raw: bytes) -> int:
    """Entry count used by the permissioned-mode parameter size limit."""
    if not raw:
        return 0
    op = raw[0]
    if op in (OP_SETUP, OP_ADD, OP_DELETE):
        if len(raw) < 5:
            raise ParameterError("truncated payload")
        return _U32.unpack(raw[1:5])[0]
    if op == OP_MU_STORE:
        rd = Reader(raw[1:])
        rd.take(32)
        return rd.u32()
    return 1


def payload_opcode_name(raw: bytes) -> str:
    if not raw or raw[0] not in OPCODE_NAMES:
        return "UNKNOWN"
    return OPCODE_NAMES[raw[0]]


# ---------------------------------------------------------------------------
# Canonical encoding (state digests, exported owner state)
# ---------------------------------------------------------------------------

def canon_bytes(b: bytes) -> bytes:
    return _U32.pack(len(b)) + b


def canon_uint(n: int) -> bytes:
    return n.to_bytes(8, "big")


def canon_str(s: str) -> bytes:
    return canon_bytes(s.encode("utf-8"))


def canon_bytes_map(d: dict[bytes, bytes]) -> bytes:
    out = [_U32.pack(len(d))]
    for k in sorted(d):
        out.append(canon_bytes(k))
        out.append(canon_bytes(d[k]))
    return b"".join(out)


def canon_bytes_set(s) -> bytes:
    items = sorted(s)
    return _U32.pack(len(items)) + b"".join(canon_bytes(i) for i in items)


def canon_uint_list(xs) -> bytes:
    return _U32.pack(len(xs)) + b"".join(canon_uint(x) for x in xs)
