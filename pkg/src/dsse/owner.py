"""Data-owner client: key material, local counters, token and update builders.

The owner is the single writer of the scheme. It derives all per-keyword
keys, turns a plaintext database into upload payloads, issues search tokens,
runs the two-phase add protocol and decodes results saved in contract state.
Operations that mutate the counter table must be externally serialized;
token generation and decoding are read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import crypto, wire
from .errors import AuthenticationError, CapacityError, ParameterError, ProtocolError
from .index import (NonceSource, PlainDatabase, build_encrypted_index,
                    encode_id, partition_entries, random_nonces)
from .params import MODE_PRIVATE, SchemeParams
from .wire import Reader

_STATE_MAGIC = b"dsse-owner-state-v1"
_EXPORT_CONTEXT = b"owner-state-wrap-v1"
_DOC_KEY_CONTEXT = b"doc-key-v1"


@dataclass
class ForwardPrivacyState:
    """Trapdoor-permutation chain heads, one per keyword with live additions."""

    keypair: crypto.TdpKeyPair
    heads: dict[str, int] = field(default_factory=dict)


@dataclass
class AddRequest:
    """Phase-1 output: the payload plus the alignment needed for phase 2.

    Tuples travel sorted by label; `keywords` lists the keyword behind each
    sorted position so the contract's response bits can be mapped back.
    """

    payload: bytes
    keywords: list[str]
    fp_points: list[int | None]

    def __len__(self):
        return len(self.keywords)


@dataclass
class SearchRequest:
    query_key: bytes
    payloads: list[bytes]
    keyword: str


class DataOwner:
    def __init__(self, mk: crypto.MasterKeys, params: SchemeParams,
                 forward_private: bool = False,
                 nonces: NonceSource = random_nonces,
                 fp_keypair: crypto.TdpKeyPair | None = None):
        self.mk = mk
        self.params = params
        self.nonces = nonces
        self.add_counters: dict[str, int] = {}
        self.doc_addresses: dict[int, bytes] = {}
        self.fp: ForwardPrivacyState | None = None
        if forward_private:
            keypair = fp_keypair or crypto.tdp_keygen(params.fp_modulus_bits)
            self.fp = ForwardPrivacyState(keypair)

    # -- setup -----------------------------------------------------------------

    def setup(self, db: PlainDatabase) -> list[bytes]:
        """Build the encrypted index and split it into upload payloads."""
        if db.pair_count() > self.params.max_pairs:
            raise CapacityError(
                f"database has {db.pair_count()} pairs, configured maximum is "
                f"{self.params.max_pairs}")
        entries = build_encrypted_index(db, self.mk, self.params, self.nonces)
        self.add_counters = {}
        if self.fp is not None:
            self.fp.heads = {}
        return [wire.encode_setup_payload(chunk, self.params)
                for chunk in partition_entries(entries, self.params.entries_per_tx)]

    # -- search -----------------------------------------------------------------

    def _token(self, keyword: str, counter: int) -> wire.SearchToken:
        keys = crypto.derive_keyword_keys(self.mk, keyword)
        if self.fp is None:
            return wire.SearchToken(keys, counter)
        return wire.SearchToken(keys, counter,
                                fp_public=self.fp.keypair.pk,
                                fp_head=self.fp.heads.get(keyword))

    def gen_search_tokens(self, keyword: str) -> list[wire.SearchToken]:
        """One token per search transaction, counters spaced by `step`."""
        if self.params.mode == MODE_PRIVATE:
            return [self._token(keyword, 0)]
        step = self.params.step or 0
        return [self._token(keyword, i * step)
                for i in range(self.params.search_rounds)]

    def search_request(self, keyword: str) -> SearchRequest:
        tokens = self.gen_search_tokens(keyword)
        return SearchRequest(
            query_key=tokens[0].query_key(),
            payloads=[wire.encode_search_payload(t) for t in tokens],
            keyword=keyword)

    def issue_search_token(self, keyword: str) -> bytes:
        """Raw token bytes handed out of band to an authorized user."""
        return wire.encode_token(self._token(keyword, 0))

    def decode_results(self, view, keyword: str) -> set[int]:
        """Ids the contract saved for the most recent query of `keyword`."""
        qk = self._token(keyword, 0).query_key()
        records = view.read_results(qk)
        if not records:
            return set()
        last = records[-1]
        if last.invalid:
            raise ProtocolError("query was recorded as invalid")
        return set(last.ids)

    # -- updates ------------------------------------------------------------------

    def add_phase1(self, doc_id: int, keywords) -> AddRequest:
        words = set(keywords)
        if not words:
            raise ParameterError("a document must carry at least one keyword")
        if doc_id > self.params.max_id:
            raise ParameterError("document id out of range")
        id_bytes = encode_id(doc_id, self.params)
        rows = []
        for w in words:
            keys = crypto.derive_keyword_keys(self.mk, w)
            c = self.add_counters.get(w, 0)
            r = self.nonces(w, c)
            masked = crypto.xor_bytes(
                id_bytes, crypto.keystream(keys.add_mask_key, r, self.params.id_width))
            point: int | None = None
            if self.fp is None:
                label = crypto.prf(keys.add_label_key, crypto.encode_counter(c))
            else:
                head = self.fp.heads.get(w)
                if head is None:
                    point = crypto.tdp_sample(self.fp.keypair.pk)
                else:
                    point = crypto.tdp_inverse(self.fp.keypair.sk, head)
                label = crypto.prf(keys.add_label_key,
                                   self.fp.keypair.pk.encode_element(point))
            tag = crypto.prf(keys.tombstone_key, id_bytes)
            rows.append((wire.AddTuple(label, masked, r, tag), w, point))
        rows.sort(key=lambda row: row[0].label)
        return AddRequest(
            payload=wire.encode_add_payload([row[0] for row in rows], self.params),
            keywords=[row[1] for row in rows],
            fp_points=[row[2] for row in rows])

    def add_phase2(self, re_bits, request: AddRequest):
        """Commit counters for every tuple the contract actually inserted.

        A set bit means the pair was resurrected from a tombstone rather than
        written, so its counter (and chain head) stays put.
        """
        if len(re_bits) != len(request):
            raise ProtocolError(
                f"response has {len(re_bits)} bits for {len(request)} keywords")
        for bit, w, point in zip(re_bits, request.keywords, request.fp_points):
            if bit:
                continue
            self.add_counters[w] = self.add_counters.get(w, 0) + 1
            if self.fp is not None:
                self.fp.heads[w] = point

    def delete(self, doc_id: int, keywords) -> bytes:
        words = set(keywords)
        if not words:
            raise ParameterError("delete needs at least one keyword")
        id_bytes = encode_id(doc_id, self.params)
        tags = sorted(
            crypto.prf(crypto.derive_keyword_keys(self.mk, w).tombstone_key, id_bytes)
            for w in words)
        return wire.encode_delete_payload(tags)

    # -- documents -----------------------------------------------------------------

    def _doc_key(self, doc_id: int) -> bytes:
        return crypto.prf(self.mk.index_key,
                          _DOC_KEY_CONTEXT + encode_id(doc_id, self.params))

    def encrypt_doc(self, doc_id: int, plaintext: bytes) -> bytes:
        return crypto.seal(self._doc_key(doc_id), plaintext)

    def decrypt_doc(self, doc_id: int, ciphertext: bytes) -> bytes:
        return crypto.unseal(self._doc_key(doc_id), ciphertext)

    def store_doc(self, store, doc_id: int, plaintext: bytes) -> bytes:
        address = store.put(self.encrypt_doc(doc_id, plaintext))
        self.doc_addresses[doc_id] = address
        return address

    def fetch_doc(self, store, doc_id: int) -> bytes:
        address = self.doc_addresses[doc_id]
        return self.decrypt_doc(doc_id, store.get(address))

    # -- state export (stateless-owner support) ---------------------------------

    def export_state(self) -> bytes:
        body = [_STATE_MAGIC,
                wire.canon_str(self.params.mode),
                wire.canon_uint(len(self.add_counters))]
        for w in sorted(self.add_counters):
            body.append(wire.canon_str(w))
            body.append(wire.canon_uint(self.add_counters[w]))
        body.append(wire.canon_uint(len(self.doc_addresses)))
        for doc_id in sorted(self.doc_addresses):
            body.append(wire.canon_uint(doc_id))
            body.append(wire.canon_bytes(self.doc_addresses[doc_id]))
        if self.fp is None:
            body.append(b"\x00")
        else:
            pk = self.fp.keypair.pk
            body.append(b"\x01")
            body.append(wire.canon_uint(pk.modulus_bits))
            body.append(wire.canon_bytes(pk.encode_element(pk.modulus)))
            body.append(wire.canon_uint(pk.exponent))
            body.append(wire.canon_bytes(
                self.fp.keypair.sk.private_exponent.to_bytes(pk.element_bytes(), "big")))
            body.append(wire.canon_uint(len(self.fp.heads)))
            for w in sorted(self.fp.heads):
                body.append(wire.canon_str(w))
                body.append(wire.canon_bytes(pk.encode_element(self.fp.heads[w])))
        key = crypto.prf(self.mk.index_key, _EXPORT_CONTEXT)
        return crypto.seal(key, b"".join(body))

    @classmethod
    def import_state(cls, mk: crypto.MasterKeys, blob: bytes,
                     params: SchemeParams,
                     nonces: NonceSource = random_nonces) -> "DataOwner":
        key = crypto.prf(mk.index_key, _EXPORT_CONTEXT)
        raw = crypto.unseal(key, blob)
        rd = Reader(raw)
        if rd.take(len(_STATE_MAGIC)) != _STATE_MAGIC:
            raise AuthenticationError("not an owner state blob")
        mode = rd.take(rd.u32()).decode("utf-8")
        if mode != params.mode:
            raise ProtocolError(f"state was exported in {mode!r} mode")
        owner = cls(mk, params, nonces=nonces)
        for _ in range(int.from_bytes(rd.take(8), "big")):
            w = rd.take(rd.u32()).decode("utf-8")
            owner.add_counters[w] = int.from_bytes(rd.take(8), "big")
        for _ in range(int.from_bytes(rd.take(8), "big")):
            doc_id = int.from_bytes(rd.take(8), "big")
            owner.doc_addresses[doc_id] = rd.take(rd.u32())
        if rd.take(1) == b"\x01":
            bits = int.from_bytes(rd.take(8), "big")
            modulus = int.from_bytes(rd.take(rd.u32()), "big")
            exponent = int.from_bytes(rd.take(8), "big")
            private = int.from_bytes(rd.take(rd.u32()), "big")
            keypair = crypto.TdpKeyPair(
                crypto.TdpPublic(modulus, exponent, bits),
                crypto.TdpSecret(modulus, private, bits))
            owner.fp = ForwardPrivacyState(keypair)
            for _ in range(int.from_bytes(rd.take(8), "big")):
                w = rd.take(rd.u32()).decode("utf-8")
                owner.fp.heads[w] = int.from_bytes(rd.take(rd.u32()), "big")
        rd.done()
        return owner

    def state_equals(self, other: "DataOwner") -> bool:
        if (self.mk.to_bytes() != other.mk.to_bytes()
                or self.params != other.params
                or self.add_counters != other.add_counters
                or self.doc_addresses != other.doc_addresses):
            return False
        if (self.fp is None) != (other.fp is None):
            return False
        if self.fp is not None:
            if (self.fp.keypair.pk != other.fp.keypair.pk
                    or self.fp.keypair.sk != other.fp.keypair.sk
                    or self.fp.heads != other.fp.heads):
                return False
        return True
