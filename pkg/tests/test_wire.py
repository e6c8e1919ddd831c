import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsse import crypto, wire
from dsse.errors import ParameterError
from dsse.index import IndexEntry
from dsse.params import private_params, public_params

PUB = public_params()

labels = st.binary(min_size=32, max_size=32)
nonces = st.binary(min_size=32, max_size=32)
tags = st.binary(min_size=32, max_size=32)


@st.composite
def tokens(draw):
    keys = crypto.KeywordKeys(*(draw(labels) for _ in range(5)))
    return wire.SearchToken(keys, draw(st.integers(0, 2 ** 40)))


class TestPayloadRoundTrips:
    @given(st.lists(st.tuples(labels, nonces), max_size=8))
    @settings(max_examples=40)
    def test_setup(self, rows):
        entries = [IndexEntry(label, b"\x07" * PUB.packed_width, nonce)
                   for label, nonce in rows]
        op, decoded = wire.decode_payload(
            wire.encode_setup_payload(entries, PUB), PUB)
        assert op == wire.OP_SETUP
        assert [(r[0], r[2]) for r in decoded.records] == rows

    @given(tokens())
    @settings(max_examples=40)
    def test_search(self, token):
        op, decoded = wire.decode_payload(wire.encode_search_payload(token), PUB)
        assert op == wire.OP_SEARCH and decoded.token == token

    @given(st.lists(st.tuples(labels, st.binary(min_size=4, max_size=4),
                              nonces, tags), max_size=6))
    @settings(max_examples=40)
    def test_add(self, rows):
        tuples = [wire.AddTuple(*row) for row in rows]
        op, decoded = wire.decode_payload(
            wire.encode_add_payload(tuples, PUB), PUB)
        assert op == wire.OP_ADD and decoded.tuples == tuples

    @given(st.lists(tags, max_size=10))
    @settings(max_examples=40)
    def test_delete(self, tag_list):
        op, decoded = wire.decode_payload(
            wire.encode_delete_payload(tag_list), PUB)
        assert op == wire.OP_DELETE and decoded.tags == tag_list

    def test_mu_store(self):
        payload = wire.encode_mu_store_payload(
            b"\x01" * 32, [3, 1, 2], [(1, b"aa"), (3, b"bbbb")],
            registered_queries=[b"\x02" * 32])
        op, decoded = wire.decode_payload(payload, PUB)
        assert op == wire.OP_MU_STORE
        assert decoded.members == [1, 2, 3]
        assert decoded.header == [(1, b"aa"), (3, b"bbbb")]
        assert decoded.registered_queries == [b"\x02" * 32]

    def test_truncated_payload_rejected(self):
        good = wire.encode_delete_payload([b"\x00" * 32])
        with pytest.raises(ParameterError):
            wire.decode_payload(good[:-1], PUB)

    def test_trailing_bytes_rejected(self):
        good = wire.encode_delete_payload([b"\x00" * 32])
        with pytest.raises(ParameterError):
            wire.decode_payload(good + b"\x00", PUB)


class TestTokenMasking:
    @given(tokens(), st.binary(min_size=32, max_size=32))
    @settings(max_examples=40)
    def test_mask_involution(self, token, mask):
        raw = wire.encode_token(token)
        assert wire.mask_token(wire.mask_token(raw, mask), mask) == raw

    @given(tokens(), st.binary(min_size=32, max_size=32))
    @settings(max_examples=40)
    def test_mask_leaves_counter_and_tail(self, token, mask):
        raw = wire.encode_token(token)
        masked = wire.mask_token(raw, mask)
        assert masked[160:] == raw[160:]


class TestEntryCounts:
    def test_per_opcode(self):
        assert wire.payload_entry_count(
            wire.encode_delete_payload([b"\x00" * 32] * 7)) == 7
        token_payload = wire.encode_search_payload(
            wire.SearchToken(crypto.KeywordKeys(*([b"\x00" * 32] * 5)), 0))
        assert wire.payload_entry_count(token_payload) == 1

    def test_private_width_id_fields(self):
        priv = private_params()
        t = wire.AddTuple(b"\x01" * 32, b"\x02" * priv.id_width,
                          b"\x03" * 32, b"\x04" * 32)
        _, decoded = wire.decode_payload(
            wire.encode_add_payload([t], priv), priv)
        assert decoded.tuples[0].masked_id == b"\x02" * priv.id_width


class TestDecoderRobustness:
    @given(st.binary(max_size=400))
    @settings(max_examples=200)
    def test_arbitrary_bytes_never_crash_decode(self, raw):
        try:
            wire.decode_payload(raw, PUB)
        except ParameterError:
            pass  # the only acceptable failure mode

    @given(st.sampled_from([0x01, 0x02, 0x03, 0x04, 0x05, 0x06]),
           st.binary(max_size=300))
    @settings(max_examples=200)
    def test_arbitrary_bodies_never_crash_decode(self, opcode, body):
        try:
            wire.decode_payload(bytes([opcode]) + body, PUB)
        except ParameterError:
            pass
