import secrets

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsse.errors import AuthenticationError
from dsse.owner import DataOwner
from dsse.params import public_params
from dsse.store import DirectoryStore, MemoryStore, NotFound, address_of

from helpers import DET_NONCES, FIXED_MK


class TestMemoryStore:
    @given(st.binary(max_size=256))
    @settings(max_examples=100)
    def test_round_trip(self, blob):
        store = MemoryStore()
        assert store.get(store.put(blob)) == blob

    def test_put_idempotent(self):
        store = MemoryStore()
        assert store.put(b"x") == store.put(b"x")
        assert len(store) == 1

    def test_address_is_content_hash(self):
        store = MemoryStore()
        blob = secrets.token_bytes(40)
        assert store.put(blob) == address_of(blob)

    def test_unknown_address(self):
        with pytest.raises(NotFound):
            MemoryStore().get(b"\x00" * 32)

    def test_many_random_blobs(self):
        store = MemoryStore()
        blobs = [secrets.token_bytes(i % 97 + 1) for i in range(1000)]
        addresses = [store.put(b) for b in blobs]
        assert len(set(addresses)) == len(set(blobs))
        for address, blob in zip(addresses, blobs):
            assert store.get(address) == blob


class TestDirectoryStore:
    def test_round_trip_on_disk(self, tmp_path):
        store = DirectoryStore(str(tmp_path))
        blob = secrets.token_bytes(64)
        address = store.put(blob)
        assert (tmp_path / "objects" / address.hex()).exists()
        assert DirectoryStore(str(tmp_path)).get(address) == blob

    def test_unknown_address(self, tmp_path):
        with pytest.raises(NotFound):
            DirectoryStore(str(tmp_path)).get(b"\x11" * 32)


class TestDocumentEncryption:
    def _owner(self):
        return DataOwner(FIXED_MK, public_params(), nonces=DET_NONCES)

    def test_round_trip(self):
        owner = self._owner()
        ct = owner.encrypt_doc(5, b"contents")
        assert owner.decrypt_doc(5, ct) == b"contents"

    def test_bit_flip_rejected(self):
        owner = self._owner()
        ct = bytearray(owner.encrypt_doc(5, b"contents"))
        ct[len(ct) // 2] ^= 0x80
        with pytest.raises(AuthenticationError):
            owner.decrypt_doc(5, bytes(ct))

    def test_wrong_document_key_rejected(self):
        owner = self._owner()
        ct = owner.encrypt_doc(5, b"contents")
        with pytest.raises(AuthenticationError):
            owner.decrypt_doc(6, ct)

    def test_fresh_nonces_distinct_ciphertexts(self):
        owner = self._owner()
        nonces = set()
        for _ in range(1000):
            ct = owner.encrypt_doc(5, b"contents")
            nonces.add(ct[:12])
        assert len(nonces) == 1000

    def test_address_map_survives_state_round_trip(self):
        store = MemoryStore()
        owner = self._owner()
        owner.store_doc(store, 5, b"five")
        owner.store_doc(store, 6, b"six")
        resumed = DataOwner.import_state(FIXED_MK, owner.export_state(),
                                         public_params())
        assert resumed.doc_addresses == owner.doc_addresses
        assert resumed.fetch_doc(store, 5) == b"five"
        assert resumed.fetch_doc(store, 6) == b"six"
