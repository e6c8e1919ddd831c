"""Plaintext reference model of the whole scheme's observable behavior.

Replays the same operation sequence over cleartext pairs, including the
tombstone quirks: deleting a pair that was never added plants a tombstone
that silently swallows the next add of that pair, and re-adding a deleted
pair resurrects the existing index entry instead of writing a new one.
Every search result produced by the encrypted pipeline must match this model
exactly.
"""

from __future__ import annotations

from .index import PlainDatabase


class PlainOracle:
    def __init__(self):
        self.setup_pairs: set[tuple[str, int]] = set()
        self.added_pairs: set[tuple[str, int]] = set()
        self.tombstones: set[tuple[str, int]] = set()

    def setup(self, db: PlainDatabase):
        self.setup_pairs = {(w, doc_id)
                            for doc_id, words in db.docs.items() for w in words}
        self.added_pairs = set()
        self.tombstones = set()

    def add(self, doc_id: int, keywords):
        for w in set(keywords):
            pair = (w, doc_id)
            if pair in self.tombstones:
                self.tombstones.discard(pair)
            else:
                self.added_pairs.add(pair)

    def delete(self, doc_id: int, keywords):
        for w in set(keywords):
            self.tombstones.add((w, doc_id))

    def search(self, keyword: str) -> set[int]:
        live = {doc_id for (w, doc_id) in self.setup_pairs | self.added_pairs
                if w == keyword}
        dead = {doc_id for (w, doc_id) in self.tombstones if w == keyword}
        return live - dead
