import random

import pytest

from dsse import index, leakage
from dsse.errors import ParameterError
from dsse.harness import ProtocolDriver
from dsse.owner import DataOwner
from dsse.params import public_params

from helpers import DET_NONCES, FIXED_MK, random_db

PUB = public_params()


def log_of(ops):
    """ops: list of ('search', w) | ('add', id, words) | ('del', id, words)."""
    log = leakage.QueryLog()
    for op in ops:
        if op[0] == "search":
            log.record_search(op[1])
        elif op[0] == "add":
            log.record_add(op[1], op[2])
        else:
            log.record_delete(op[1], op[2])
    return log


class TestSetupLeakage:
    def test_empty(self):
        assert leakage.setup_leakage(index.PlainDatabase(), 8) == 0

    def test_ceiling(self):
        db = index.PlainDatabase({i: {"w"} for i in range(9)})
        assert leakage.setup_leakage(db, 8) == 2

    def test_matches_built_index_size(self):
        rng = random.Random(47)
        for _ in range(100):
            db = random_db(rng, max_keywords=12, max_pairs=80)
            entries = index.build_encrypted_index(db, FIXED_MK, PUB, DET_NONCES)
            assert leakage.setup_leakage(db, PUB.pack_width) == len(entries)


class TestPatterns:
    def test_never_searched_empty(self):
        log = log_of([("search", "other")])
        assert leakage.search_pattern("w", log) == set()

    def test_indices_recorded(self):
        log = log_of([("search", "a"), ("search", "b"), ("search", "w"),
                      ("add", 1, {"w"}), ("add", 2, {"x"}), ("del", 1, {"w"}),
                      ("search", "w")])
        assert leakage.search_pattern("w", log) == {3, 7}
        assert leakage.add_pattern(1, "w", log) == {4}
        assert leakage.del_pattern(1, "w", log) == {6}

    def test_brute_scan_equivalence(self):
        rng = random.Random(53)
        words = [f"w{i}" for i in range(6)]
        ops = []
        for _ in range(60):
            roll = rng.random()
            if roll < 0.4:
                ops.append(("search", rng.choice(words)))
            elif roll < 0.7:
                ops.append(("add", rng.randrange(20),
                            set(rng.sample(words, k=rng.randint(1, 3)))))
            else:
                ops.append(("del", rng.randrange(20),
                            set(rng.sample(words, k=rng.randint(1, 3)))))
        log = log_of(ops)
        for w in words:
            expected = {i + 1 for i, op in enumerate(ops)
                        if op[0] == "search" and op[1] == w}
            assert leakage.search_pattern(w, log) == expected
            for doc in range(20):
                adds = {i + 1 for i, op in enumerate(ops)
                        if op[0] == "add" and op[1] == doc and w in op[2]}
                dels = {i + 1 for i, op in enumerate(ops)
                        if op[0] == "del" and op[1] == doc and w in op[2]}
                assert leakage.add_pattern(doc, w, log) == adds
                assert leakage.del_pattern(doc, w, log) == dels

    def test_keyword_patterns_exclude_empty(self):
        log = log_of([("add", 1, {"w"}), ("add", 2, {"v"})])
        by_kw = leakage.add_pattern_by_keyword("w", log, {1, 2, 3})
        assert set(by_kw) == {1}

    def test_del_mirrors_add(self):
        log = log_of([("del", 1, {"w"}), ("del", 2, {"w"}), ("add", 2, {"w"})])
        assert set(leakage.del_pattern_by_keyword("w", log, {1, 2})) == {1, 2}


class TestCompositeLeakage:
    def test_search_leakage_components(self):
        db = index.PlainDatabase({1: {"w"}, 2: {"w"}, 3: {"v"}})
        log = log_of([("search", "w"), ("add", 9, {"w"})])
        log.seed_identifiers(db)
        out = leakage.search_leakage("w", log, log.identifiers, db)
        assert out["search_pattern"] == {1}
        assert out["matches"] == {1, 2}
        assert out["add_pattern"] == {9: frozenset({2})}
        assert out["del_pattern"] == {}

    def test_update_leakage_delete_marker(self):
        out = leakage.update_leakage("del", 7, {"a", "b"}, leakage.QueryLog())
        assert out["op"] == "del"
        assert out["keyword_count"] == 2

    def test_update_leakage_hides_keywords(self):
        out = leakage.update_leakage("add", 7, {"secret", "words"},
                                     leakage.QueryLog())
        assert "secret" not in repr(out) and "words" not in repr(out)
        assert out["keyword_count"] == 2

    def test_update_leakage_reveals_id_only_after_search(self):
        quiet = leakage.update_leakage("add", 7, {"w"}, leakage.QueryLog())
        assert quiet["doc_id"] is None
        log = log_of([("search", "w")])
        loud = leakage.update_leakage("add", 7, {"w"}, log)
        assert loud["doc_id"] == 7

    def test_bad_op_rejected(self):
        with pytest.raises(ParameterError):
            leakage.update_leakage("replace", 7, {"w"}, leakage.QueryLog())


class TestTranscriptShape:
    def test_equal_entry_counts_give_identical_setup_shapes(self):
        # same total ceil(|matches|/p): one keyword with 9 ids + one with 1
        # versus three keywords with 1 id each
        db1 = index.PlainDatabase({i: {"a"} for i in range(9)} | {100: {"b"}})
        db2 = index.PlainDatabase({1: {"x"}, 2: {"y"}, 3: {"z"}})
        assert (leakage.setup_leakage(db1, 8) == leakage.setup_leakage(db2, 8) == 3)
        o1 = DataOwner(FIXED_MK, PUB, nonces=DET_NONCES)
        o2 = DataOwner(FIXED_MK, PUB, nonces=DET_NONCES)
        assert (leakage.transcript_shape(o1.setup(db1))
                == leakage.transcript_shape(o2.setup(db2)))

    def test_shape_invariant_under_id_relabeling(self):
        rng = random.Random(59)
        db = random_db(rng, max_keywords=10, max_pairs=60)
        mapping = {doc: 4000 + i for i, doc in enumerate(sorted(db.docs))}
        renamed = index.PlainDatabase(
            {mapping[doc]: words for doc, words in db.docs.items()})
        o1 = DataOwner(FIXED_MK, PUB, nonces=DET_NONCES)
        o2 = DataOwner(FIXED_MK, PUB, nonces=DET_NONCES)
        assert (leakage.transcript_shape(o1.setup(db))
                == leakage.transcript_shape(o2.setup(renamed)))

    def test_repeated_search_payloads_byte_identical(self):
        driver = ProtocolDriver(mode="public", mk=FIXED_MK, peers=1)
        driver.setup(index.PlainDatabase({1: {"w"}}))
        first = driver.owner.search_request("w").payloads
        driver.search("w")
        second = driver.owner.search_request("w").payloads
        assert first == second

    def test_add_shape_depends_only_on_keyword_count(self):
        o1 = DataOwner(FIXED_MK, PUB, nonces=DET_NONCES)
        o2 = DataOwner(FIXED_MK, PUB, nonces=DET_NONCES)
        a = o1.add_phase1(1, {"apple", "pear", "plum"})
        b = o2.add_phase1(902, {"xx", "yy", "zz"})
        assert (leakage.transcript_shape([a.payload])
                == leakage.transcript_shape([b.payload]))


class TestQueryLogSerialization:
    def test_round_trip(self):
        log = log_of([("search", "w"), ("add", 3, {"a", "b"}),
                      ("del", 3, {"a"}), ("search", "v")])
        again = leakage.QueryLog.from_text(log.to_text())
        assert again.entries == log.entries

    def test_counters_must_increase(self):
        with pytest.raises(ParameterError):
            leakage.QueryLog.from_text("2 search w\n1 search v\n")
