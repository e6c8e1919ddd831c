import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsse import crypto, index
from dsse.errors import ParameterError
from dsse.leakage import setup_leakage
from dsse.params import private_params, public_params

from helpers import DET_NONCES, FIXED_MK, random_db

PUB = public_params()
PRIV = private_params()


class TestInvertedIndex:
    def test_empty(self):
        assert index.build_inverted_index(index.PlainDatabase()) == {}

    def test_two_documents(self):
        db = index.PlainDatabase({1: {"a", "b"}, 2: {"b"}})
        assert index.build_inverted_index(db) == {"a": [1], "b": [1, 2]}

    def test_membership_matches_brute_force(self):
        rng = random.Random(7)
        db = random_db(rng, max_keywords=20, max_pairs=150)
        inverted = index.build_inverted_index(db)
        for w in db.keywords():
            for doc_id in db.docs:
                assert (doc_id in inverted.get(w, [])) == (w in db.docs[doc_id])

    def test_lists_sorted(self):
        db = index.PlainDatabase({9: {"x"}, 1: {"x"}, 5: {"x"}})
        assert index.build_inverted_index(db)["x"] == [1, 5, 9]


class TestPacking:
    def test_single_id_padded(self):
        packed = index.pack_ids([5], PUB)
        assert index.unpack_ids(packed, PUB) == [5]
        # pad slots really carry the all-ones filler
        acc = int.from_bytes(packed, "big")
        assert acc & (2 ** 32 - 1) == PUB.pad_id

    def test_default_widths_saturate_bound(self):
        # 8 * 32 == 256 and 10 * 25 == 250 <= 256
        assert PUB.pack_width * PUB.id_bits == PUB.lambda_bits
        assert PUB.packed_width == 32
        assert PRIV.pack_width * PRIV.id_bits <= PRIV.lambda_bits
        assert PRIV.packed_width == 32

    @pytest.mark.parametrize("params", [PUB, PRIV], ids=["public", "private"])
    def test_round_trip_random(self, params):
        rng = random.Random(3)
        for _ in range(1000):
            count = rng.randint(1, params.pack_width)
            ids = rng.sample(range(params.max_id + 1), k=count)
            assert index.unpack_ids(index.pack_ids(ids, params), params) == ids

    def test_oversized_block_rejected(self):
        with pytest.raises(ParameterError):
            index.pack_ids(list(range(9)), PUB)

    def test_pad_value_reserved(self):
        with pytest.raises(ParameterError):
            index.pack_ids([PUB.pad_id], PUB)

    def test_bound_violation_rejected(self):
        with pytest.raises(ParameterError):
            public_params(pack_width=9)  # 9 * 32 > 256


class TestEncryptedIndex:
    def test_ceiling_block_count(self):
        db = index.PlainDatabase({i: {"w"} for i in range(9)})
        entries = index.build_encrypted_index(db, FIXED_MK, PUB, DET_NONCES)
        assert len(entries) == 2

    def test_entry_count_identity(self):
        rng = random.Random(11)
        for _ in range(25):
            db = random_db(rng, max_keywords=15, max_pairs=120)
            entries = index.build_encrypted_index(db, FIXED_MK, PUB, DET_NONCES)
            assert len(entries) == index.expected_entry_count(db, PUB.pack_width)
            assert len(entries) == setup_leakage(db, PUB.pack_width)

    def test_decryption_round_trip(self):
        rng = random.Random(13)
        db = random_db(rng, max_keywords=10, max_pairs=100)
        entries = index.build_encrypted_index(db, FIXED_MK, PUB, DET_NONCES)
        by_label = {e.label: e for e in entries}
        inverted = index.build_inverted_index(db)
        for w, ids in inverted.items():
            keys = crypto.derive_keyword_keys(FIXED_MK, w)
            recovered = []
            c = 0
            while True:
                label = crypto.prf(keys.setup_label_key, crypto.encode_counter(c))
                entry = by_label.get(label)
                if entry is None:
                    break
                packed = crypto.xor_bytes(
                    entry.masked,
                    crypto.keystream(keys.setup_mask_key, entry.nonce,
                                     len(entry.masked)))
                recovered.extend(index.unpack_ids(packed, PUB))
                c += 1
            assert recovered == ids

    def test_order_independent_of_processing_order(self):
        rng = random.Random(17)
        pairs = [(i, {f"kw{rng.randint(0, 9)}", f"kw{rng.randint(10, 19)}"})
                 for i in range(40)]
        db1 = index.PlainDatabase.from_pairs(pairs)
        shuffled = pairs[:]
        rng.shuffle(shuffled)
        db2 = index.PlainDatabase.from_pairs(shuffled)
        e1 = index.build_encrypted_index(db1, FIXED_MK, PUB, DET_NONCES)
        e2 = index.build_encrypted_index(db2, FIXED_MK, PUB, DET_NONCES)
        assert e1 == e2

    def test_sorted_by_label(self):
        rng = random.Random(19)
        db = random_db(rng)
        entries = index.build_encrypted_index(db, FIXED_MK, PUB, DET_NONCES)
        labels = [e.label for e in entries]
        assert labels == sorted(labels)
        assert len(set(labels)) == len(labels)

    def test_private_mode_build(self):
        db = index.PlainDatabase({i: {"w"} for i in range(25)})
        entries = index.build_encrypted_index(db, FIXED_MK, PRIV, DET_NONCES)
        assert len(entries) == 3  # ceil(25 / 10)
        assert all(len(e.masked) == PRIV.packed_width for e in entries)

    def test_id_out_of_range_rejected(self):
        db = index.PlainDatabase({PRIV.pad_id: {"w"}})
        with pytest.raises(ParameterError):
            index.build_encrypted_index(db, FIXED_MK, PRIV, DET_NONCES)


class TestPartition:
    def test_block_arithmetic(self):
        entries = [object()] * 24_500
        assert len(index.partition_entries(entries, 70)) == 350

    def test_empty(self):
        assert index.partition_entries([], 70) == []

    def test_single_block_private_regime(self):
        entries = [object()] * 500
        assert len(index.partition_entries(entries, 500)) == 1

    @given(st.integers(min_value=0, max_value=2000),
           st.integers(min_value=1, max_value=600))
    @settings(max_examples=50)
    def test_concatenation_reproduces_input(self, n, per_tx):
        entries = list(range(n))
        chunks = index.partition_entries(entries, per_tx)
        assert [x for chunk in chunks for x in chunk] == entries
        assert len(chunks) == (n + per_tx - 1) // per_tx
