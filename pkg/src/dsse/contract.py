"""Deterministic contract state machine replicated on every simulated peer.

State is a pure fold over the ordered transaction log. Each transaction is
prepared (validated and fully computed against current state, no mutation)
and then committed, so a rejection or an out-of-gas drop leaves state
byte-identical. Search results are written into contract state and read back
by clients; transactions never return data in-band.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from . import crypto, wire
from .errors import ContractError, ParameterError
from .index import decode_id, unpack_ids
from .params import SchemeParams


@dataclass
class OpTrace:
    """Operation counts fed to the gas meter."""

    prf_evals: int = 0
    map_inserts: int = 0
    storage_bytes: int = 0


class QueryRecord:
    """One logical query's saved ids; spans all transactions of that query."""

    __slots__ = ("ids", "add_scanned", "invalid")

    def __init__(self, ids=None, add_scanned=False, invalid=False):
        self.ids: list[int] = list(ids) if ids else []
        self.add_scanned = add_scanned
        self.invalid = invalid

    def canon(self) -> bytes:
        flags = (1 if self.add_scanned else 0) | (2 if self.invalid else 0)
        return bytes([flags]) + wire.canon_uint_list(self.ids)


@dataclass
class Prepared:
    """Computed effect of one transaction, ready to commit."""

    op: int
    trace: OpTrace
    info: dict
    setup_inserts: list = field(default_factory=list)
    add_inserts: list = field(default_factory=list)
    tombstones_add: list = field(default_factory=list)
    tombstones_remove: list = field(default_factory=list)
    re_append: tuple | None = None
    result_query: bytes | None = None
    result_new_occurrence: bool = False
    result_ids: list = field(default_factory=list)
    result_mark_scanned: bool = False
    result_invalid: bool = False
    mu_set: wire.MuStorePayload | None = None
    closes_setup: bool = False


class SearchContract:
    """Dictionary-backed encrypted index plus the query/update logs."""

    def __init__(self, params: SchemeParams):
        self.params = params
        self.setup_open = True
        self.setup_index: dict[bytes, bytes] = {}   # label -> masked32 || nonce
        self.added_index: dict[bytes, bytes] = {}   # label -> masked id || nonce
        self.tombstones: set[bytes] = set()
        self.result_log: dict[bytes, list[QueryRecord]] = {}
        self.re_log: list[tuple[int, ...]] = []
        self.registered_queries: set[bytes] = set()
        self.mu_secret: bytes | None = None
        self.mu_members: tuple[int, ...] = ()
        self.mu_header: tuple[tuple[int, bytes], ...] = ()

    # -- transaction interface ---------------------------------------------

    def prepare(self, payload: bytes) -> Prepared:
        # Any parameter violation during preparation (malformed framing, a
        # chain point outside the permutation domain, ...) must become a
        # deterministic rejection, never an escaping exception.
        try:
            op, decoded = wire.decode_payload(payload, self.params)
            if op == wire.OP_SETUP:
                return self._prepare_setup(decoded)
            if op == wire.OP_SEARCH:
                return self._prepare_search(decoded.token)
            if op == wire.OP_ADD:
                return self._prepare_add(decoded)
            if op == wire.OP_DELETE:
                return self._prepare_delete(decoded)
            if op == wire.OP_MU_STORE:
                return self._prepare_mu_store(decoded)
            if op == wire.OP_MU_SEARCH:
                return self._prepare_mu_search(decoded)
        except ParameterError as exc:
            raise ContractError(f"rejected payload: {exc}") from exc
        raise ContractError(f"unknown opcode {op:#x}")

    def commit(self, prep: Prepared):
        if prep.closes_setup:
            self.setup_open = False
        for label, value in prep.setup_inserts:
            self.setup_index[label] = value
        for label, value in prep.add_inserts:
            self.added_index[label] = value
        for tag in prep.tombstones_add:
            self.tombstones.add(tag)
        for tag in prep.tombstones_remove:
            self.tombstones.discard(tag)
        if prep.re_append is not None:
            self.re_log.append(prep.re_append)
        if prep.result_query is not None:
            records = self.result_log.setdefault(prep.result_query, [])
            if prep.result_new_occurrence or not records:
                records.append(QueryRecord(prep.result_ids,
                                           prep.result_mark_scanned,
                                           prep.result_invalid))
            else:
                records[-1].ids.extend(prep.result_ids)
                records[-1].add_scanned |= prep.result_mark_scanned
        if prep.mu_set is not None:
            self.mu_secret = prep.mu_set.group_secret
            self.mu_members = tuple(sorted(prep.mu_set.members))
            self.mu_header = tuple(prep.mu_set.header)
            self.registered_queries |= set(prep.mu_set.registered_queries)

    def apply(self, payload: bytes) -> Prepared:
        prep = self.prepare(payload)
        self.commit(prep)
        return prep

    # -- per-opcode preparation ----------------------------------------------

    def _prepare_setup(self, decoded: wire.SetupPayload) -> Prepared:
        if not self.setup_open:
            raise ContractError("setup epoch is closed")
        trace = OpTrace()
        inserts = []
        seen: set[bytes] = set()
        for label, masked32, nonce in decoded.records:
            if label in self.setup_index or label in seen:
                raise ContractError("duplicate setup label")
            seen.add(label)
            inserts.append((label, masked32 + nonce))
            trace.map_inserts += 1
            trace.storage_bytes += 96
        return Prepared(op=wire.OP_SETUP, trace=trace,
                        info={"op": "SETUP", "records": len(inserts)},
                        setup_inserts=inserts)

    def _scan_setup_index(self, token: wire.SearchToken, trace: OpTrace):
        params = self.params
        saved: list[int] = []
        c = token.counter
        entries = 0
        while params.step is None or entries < params.step:
            label = crypto.prf(token.keys.setup_label_key, crypto.encode_counter(c))
            trace.prf_evals += 1
            value = self.setup_index.get(label)
            if value is None:
                break
            masked32, nonce = value[:32], value[32:]
            stream = crypto.keystream(token.keys.setup_mask_key, nonce,
                                      params.packed_width)
            trace.prf_evals += 1
            packed = crypto.xor_bytes(masked32[:params.packed_width], stream)
            for doc in unpack_ids(packed, params):
                tag = crypto.prf(token.keys.tombstone_key,
                                 doc.to_bytes(params.id_width, "big"))
                trace.prf_evals += 1
                if tag not in self.tombstones:
                    saved.append(doc)
            c += 1
            entries += 1
        return saved, entries

    def _scan_added_index(self, token: wire.SearchToken, trace: OpTrace):
        params = self.params
        saved: list[int] = []
        entries = 0

        def visit(value: bytes):
            nonlocal entries
            masked_id, nonce = value[:params.id_width], value[params.id_width:]
            stream = crypto.keystream(token.keys.add_mask_key, nonce, params.id_width)
            trace.prf_evals += 1
            doc = decode_id(crypto.xor_bytes(masked_id, stream), params)
            tag = crypto.prf(token.keys.tombstone_key,
                             doc.to_bytes(params.id_width, "big"))
            trace.prf_evals += 1
            if tag not in self.tombstones:
                saved.append(doc)
            entries += 1

        if token.fp_public is not None:
            # Walk the permutation chain backwards from the newest point.
            current = token.fp_head
            while current is not None:
                label = crypto.prf(token.keys.add_label_key,
                                   token.fp_public.encode_element(current))
                trace.prf_evals += 1
                value = self.added_index.get(label)
                if value is None:
                    break
                visit(value)
                current = crypto.tdp_forward(token.fp_public, current)
                trace.prf_evals += 1
        else:
            c = 0
            while True:
                label = crypto.prf(token.keys.add_label_key, crypto.encode_counter(c))
                trace.prf_evals += 1
                value = self.added_index.get(label)
                if value is None:
                    break
                visit(value)
                c += 1
        return saved, entries

    def _prepare_search(self, token: wire.SearchToken,
                        op: int = wire.OP_SEARCH,
                        extra_info: dict | None = None) -> Prepared:
        trace = OpTrace()
        qk = token.query_key()
        records = self.result_log.get(qk, [])
        new_occurrence = token.counter == 0 or not records

        saved, touched = self._scan_setup_index(token, trace)
        scan_adds = new_occurrence or not records[-1].add_scanned
        added_saved: list[int] = []
        if scan_adds:
            added_saved, _ = self._scan_added_index(token, trace)
        all_saved = saved + added_saved
        trace.storage_bytes += len(all_saved) * self.params.id_width

        occurrence = len(records) if new_occurrence else len(records) - 1
        info = {"op": wire.OPCODE_NAMES[op], "query_key": qk.hex(),
                "occurrence": occurrence, "saved": len(all_saved),
                "entries_touched": touched, "new_occurrence": new_occurrence}
        if extra_info:
            info.update(extra_info)
        return Prepared(op=op, trace=trace, info=info,
                        result_query=qk,
                        result_new_occurrence=new_occurrence,
                        result_ids=all_saved,
                        result_mark_scanned=scan_adds,
                        closes_setup=self.setup_open)

    def _prepare_add(self, decoded: wire.AddPayload) -> Prepared:
        trace = OpTrace()
        bits: list[int] = []
        inserts = []
        consumed: list[bytes] = []
        consumed_set: set[bytes] = set()
        new_labels: set[bytes] = set()
        for t in decoded.tuples:
            if t.tombstone_tag in self.tombstones and t.tombstone_tag not in consumed_set:
                bits.append(1)
                consumed.append(t.tombstone_tag)
                consumed_set.add(t.tombstone_tag)
            else:
                if t.label in self.added_index or t.label in new_labels:
                    raise ContractError("duplicate label in added index")
                new_labels.add(t.label)
                inserts.append((t.label, t.masked_id + t.nonce))
                bits.append(0)
                trace.map_inserts += 1
                trace.storage_bytes += 32 + len(t.masked_id) + 32
            trace.storage_bytes += 1  # response bit
        re_index = len(self.re_log)
        return Prepared(op=wire.OP_ADD, trace=trace,
                        info={"op": "ADD", "re": tuple(bits), "re_index": re_index},
                        add_inserts=inserts,
                        tombstones_remove=consumed,
                        re_append=tuple(bits),
                        closes_setup=self.setup_open)

    def _prepare_delete(self, decoded: wire.DeletePayload) -> Prepared:
        trace = OpTrace()
        fresh = []
        seen: set[bytes] = set()
        for tag in decoded.tags:
            if tag not in self.tombstones and tag not in seen:
                fresh.append(tag)
                seen.add(tag)
                trace.map_inserts += 1
                trace.storage_bytes += 32
        return Prepared(op=wire.OP_DELETE, trace=trace,
                        info={"op": "DELETE", "new_tags": len(fresh)},
                        tombstones_add=fresh,
                        closes_setup=self.setup_open)

    def _prepare_mu_store(self, decoded: wire.MuStorePayload) -> Prepared:
        trace = OpTrace()
        trace.map_inserts += 1
        trace.storage_bytes += 32 + 4 * len(decoded.members) + sum(
            4 + len(ct) for _, ct in decoded.header) + 32 * len(decoded.registered_queries)
        return Prepared(op=wire.OP_MU_STORE, trace=trace,
                        info={"op": "MU_STORE", "members": sorted(decoded.members)},
                        mu_set=decoded,
                        closes_setup=self.setup_open)

    def _prepare_mu_search(self, decoded: wire.MuSearchPayload) -> Prepared:
        if self.mu_secret is None:
            raise ContractError("multi-user gate not initialized")
        trace = OpTrace()
        raw = wire.mask_token(decoded.masked_token, self.mu_secret)
        try:
            _, inner = wire.decode_payload(bytes([wire.OP_SEARCH]) + raw, self.params)
        except ParameterError as exc:
            raise ContractError(f"malformed masked token: {exc}") from exc
        token = inner.token

        valid = token.query_key() in self.registered_queries
        if not valid:
            label = crypto.prf(token.keys.setup_label_key, crypto.encode_counter(0))
            trace.prf_evals += 1
            valid = label in self.setup_index
        if not valid:
            if token.fp_public is not None:
                if token.fp_head is not None:
                    first = crypto.prf(token.keys.add_label_key,
                                       token.fp_public.encode_element(token.fp_head))
                    trace.prf_evals += 1
                    valid = first in self.added_index
            else:
                first = crypto.prf(token.keys.add_label_key, crypto.encode_counter(0))
                trace.prf_evals += 1
                valid = first in self.added_index
        if not valid:
            qk = token.query_key()
            occurrence = len(self.result_log.get(qk, []))
            return Prepared(op=wire.OP_MU_SEARCH, trace=trace,
                            info={"op": "MU_SEARCH", "query_key": qk.hex(),
                                  "occurrence": occurrence, "saved": 0,
                                  "invalid": True},
                            result_query=qk,
                            result_new_occurrence=True,
                            result_mark_scanned=True,
                            result_invalid=True,
                            closes_setup=self.setup_open)
        prep = self._prepare_search(token, op=wire.OP_MU_SEARCH,
                                    extra_info={"invalid": False})
        prep.trace.prf_evals += trace.prf_evals
        return prep

    # -- read-only state queries ---------------------------------------------

    def read_results(self, query_key: bytes) -> list[QueryRecord]:
        return self.result_log.get(query_key, [])

    def read_re(self, re_index: int) -> tuple[int, ...]:
        return self.re_log[re_index]

    def read_group_gate(self) -> tuple[tuple[int, ...], tuple[tuple[int, bytes], ...]]:
        return self.mu_members, self.mu_header

    # -- digests ---------------------------------------------------------------

    def component_digests(self) -> dict[str, str]:
        return {name: hashlib.sha256(blob).hexdigest()
                for name, blob in self._components()}

    def _components(self):
        params_blob = (wire.canon_uint(self.params.id_bits)
                       + wire.canon_uint(self.params.pack_width)
                       + wire.canon_uint(2 ** 64 - 1 if self.params.step is None
                                         else self.params.step))
        yield "params", params_blob
        yield "setup_open", b"\x01" if self.setup_open else b"\x00"
        yield "setup_index", wire.canon_bytes_map(self.setup_index)
        yield "added_index", wire.canon_bytes_map(self.added_index)
        yield "tombstones", wire.canon_bytes_set(self.tombstones)
        results = []
        for qk in sorted(self.result_log):
            recs = self.result_log[qk]
            blob = wire.canon_bytes(qk) + wire.canon_uint(len(recs))
            blob += b"".join(rec.canon() for rec in recs)
            results.append(blob)
        yield "result_log", wire.canon_uint(len(results)) + b"".join(results)
        re_blob = wire.canon_uint(len(self.re_log)) + b"".join(
            bytes(bits) + b"\xff" for bits in self.re_log)
        yield "re_log", re_blob
        yield "registered_queries", wire.canon_bytes_set(self.registered_queries)
        if self.mu_secret is None:
            yield "mu_gate", b"\x00"
        else:
            gate = (b"\x01" + wire.canon_bytes(self.mu_secret)
                    + wire.canon_uint_list(self.mu_members)
                    + wire.canon_uint(len(self.mu_header))
                    + b"".join(wire.canon_uint(uid) + wire.canon_bytes(ct)
                               for uid, ct in self.mu_header))
            yield "mu_gate", gate

    def state_digest(self) -> bytes:
        h = hashlib.sha256(b"dsse-state-v1")
        for name, blob in self._components():
            h.update(wire.canon_str(name))
            h.update(wire.canon_bytes(blob))
        return h.digest()
