"""Plaintext database model, id packing and encrypted index construction.

The encrypted index is a list of (label, masked id block, nonce) entries,
sorted by label so nothing about keyword processing order survives into the
upload. Construction is deterministic given the keys and the nonce source.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from . import crypto
from .errors import ParameterError
from .params import SchemeParams

LABEL_BYTES = 32
NONCE_BYTES = 32

# Nonce source: called once per (keyword, counter) entry. The default is
# os.urandom; tests inject an HMAC-based deterministic source.
NonceSource = Callable[[str, int], bytes]


def random_nonces(_w: str, _c: int) -> bytes:
    return os.urandom(NONCE_BYTES)


def seeded_nonces(seed: bytes) -> NonceSource:
    """Deterministic nonce source keyed by (keyword, counter); test plumbing."""
    def source(w: str, c: int) -> bytes:
        return crypto.prf(seed, w.encode("utf-8") + crypto.encode_counter(c))
    return source


class PlainDatabase:
    """Cleartext ground truth: document id -> keyword set."""

    def __init__(self, docs: Mapping[int, Iterable[str]] | None = None):
        self.docs: dict[int, set[str]] = {}
        if docs:
            for doc_id, words in docs.items():
                self.add_doc(doc_id, words)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, Iterable[str]]]) -> "PlainDatabase":
        db = cls()
        for doc_id, words in pairs:
            if doc_id in db.docs:
                raise ParameterError(f"duplicate document id {doc_id}")
            db.add_doc(doc_id, words)
        return db

    def add_doc(self, doc_id: int, words: Iterable[str]):
        if doc_id < 0:
            raise ParameterError("document ids must be non-negative")
        self.docs[doc_id] = set(words)

    def keywords(self) -> set[str]:
        out: set[str] = set()
        for words in self.docs.values():
            out |= words
        return out

    def pair_count(self) -> int:
        return sum(len(words) for words in self.docs.values())

    def matching(self, keyword: str) -> list[int]:
        return sorted(i for i, words in self.docs.items() if keyword in words)

    def validate_ids(self, params: SchemeParams):
        for doc_id in self.docs:
            if doc_id > params.max_id:
                raise ParameterError(
                    f"document id {doc_id} does not fit in {params.id_bits} bits "
                    "with the pad value reserved")

    def __len__(self) -> int:
        return len(self.docs)


def build_inverted_index(db: PlainDatabase) -> dict[str, list[int]]:
    """keyword -> ascending list of the document ids containing it."""
    index: dict[str, list[int]] = {}
    for doc_id, words in db.docs.items():
        for w in words:
            index.setdefault(w, []).append(doc_id)
    for ids in index.values():
        ids.sort()
    return index


# ---------------------------------------------------------------------------
# Identifier packing
# ---------------------------------------------------------------------------

def pack_ids(ids: list[int], params: SchemeParams) -> bytes:
    """Concatenate up to pack_width ids of id_bits each, pad-filled, as bytes.

    The bit string is MSB-aligned; trailing bits of the final byte are zero.
    """
    p = params.pack_width
    if not 1 <= len(ids) <= p:
        raise ParameterError(f"block must hold between 1 and {p} ids")
    pad = params.pad_id
    acc = 0
    for slot in range(p):
        v = ids[slot] if slot < len(ids) else pad
        if not 0 <= v <= pad:
            raise ParameterError(f"id {v} out of range for {params.id_bits} bits")
        if v == pad and slot < len(ids):
            raise ParameterError("the all-ones pad value is reserved")
        acc = (acc << params.id_bits) | v
    total_bits = p * params.id_bits
    acc <<= params.packed_width * 8 - total_bits
    return acc.to_bytes(params.packed_width, "big")


def unpack_ids(block: bytes, params: SchemeParams) -> list[int]:
    """Inverse of pack_ids; pad fillers are dropped."""
    if len(block) < params.packed_width:
        raise ParameterError("packed block too short")
    acc = int.from_bytes(block[:params.packed_width], "big")
    acc >>= params.packed_width * 8 - params.pack_width * params.id_bits
    mask = params.pad_id
    out = []
    for slot in reversed(range(params.pack_width)):
        v = (acc >> (slot * params.id_bits)) & mask
        if v != params.pad_id:
            out.append(v)
    return out


def encode_id(doc_id: int, params: SchemeParams) -> bytes:
    """Fixed-width id encoding used for unpacked ids and tombstone tags."""
    if not 0 <= doc_id <= params.pad_id:
        raise ParameterError("id out of range")
    return doc_id.to_bytes(params.id_width, "big")


def decode_id(raw: bytes, params: SchemeParams) -> int:
    return int.from_bytes(raw[:params.id_width], "big")


# ---------------------------------------------------------------------------
# Encrypted index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexEntry:
    label: bytes        # 32-byte address in the contract dictionary
    masked: bytes       # packed ids XOR keystream, packed_width bytes
    nonce: bytes        # 32-byte per-entry mask nonce

    def __post_init__(self):
        if len(self.label) != LABEL_BYTES or len(self.nonce) != NONCE_BYTES:
            raise ParameterError("malformed index entry")


def build_encrypted_index(db: PlainDatabase, mk: crypto.MasterKeys,
                          params: SchemeParams,
                          nonces: NonceSource = random_nonces) -> list[IndexEntry]:
    """Encrypt the whole inverted index into label-sorted entries.

    Per keyword, the ascending id list is split into pack_width-sized blocks;
    block c gets label F(setup_label_key, c) and its packed ids are masked
    with the keystream expanded from a fresh nonce.
    """
    db.validate_ids(params)
    inverted = build_inverted_index(db)
    entries: list[IndexEntry] = []
    seen_labels: set[bytes] = set()
    p = params.pack_width
    for w, ids in inverted.items():
        keys = crypto.derive_keyword_keys(mk, w)
        for c in range(0, (len(ids) + p - 1) // p):
            block = ids[c * p:(c + 1) * p]
            packed = pack_ids(block, params)
            r = nonces(w, c)
            if len(r) != NONCE_BYTES:
                raise ParameterError("nonce source must yield 32-byte nonces")
            masked = crypto.xor_bytes(
                packed, crypto.keystream(keys.setup_mask_key, r, len(packed)))
            label = crypto.prf(keys.setup_label_key, crypto.encode_counter(c))
            if label in seen_labels:
                raise ParameterError("label collision while building the index")
            seen_labels.add(label)
            entries.append(IndexEntry(label, masked, r))
    entries.sort(key=lambda e: e.label)
    return entries


def expected_entry_count(db: PlainDatabase, pack_width: int) -> int:
    """Sum over keywords of ceil(matches / pack_width)."""
    inverted = build_inverted_index(db)
    return sum((len(ids) + pack_width - 1) // pack_width for ids in inverted.values())


def partition_entries(entries: list[IndexEntry],
                      entries_per_tx: int) -> list[list[IndexEntry]]:
    """Chop the sorted entry list into upload-transaction-sized runs."""
    if entries_per_tx < 1:
        raise ParameterError("entries_per_tx must be >= 1")
    return [entries[i:i + entries_per_tx]
            for i in range(0, len(entries), entries_per_tx)]
