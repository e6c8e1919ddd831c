"""Executable leakage oracles: what each transcript is allowed to reveal.

These functions formalize the information budget of the scheme: setup leaks
only the encrypted-index entry count, a search leaks when the same keyword
was queried before plus its current matches and update history, and an
update leaks its operation type, keyword count and per-keyword history.
Tests assert that observable transcripts carry no more than this.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import wire
from .errors import ParameterError
from .index import PlainDatabase, build_inverted_index

OP_SEARCH = "search"
OP_ADD = "add"
OP_DELETE = "del"


@dataclass
class QueryLog:
    """Ordered history of every query fed to the system."""

    entries: list[tuple] = field(default_factory=list)
    identifiers: set[int] = field(default_factory=set)
    _next: int = 1

    def record_search(self, keyword: str) -> int:
        i = self._next
        self._next += 1
        self.entries.append((i, OP_SEARCH, keyword))
        return i

    def record_add(self, doc_id: int, keywords) -> int:
        i = self._next
        self._next += 1
        self.entries.append((i, OP_ADD, doc_id, frozenset(keywords)))
        self.identifiers.add(doc_id)
        return i

    def record_delete(self, doc_id: int, keywords) -> int:
        i = self._next
        self._next += 1
        self.entries.append((i, OP_DELETE, doc_id, frozenset(keywords)))
        return i

    def seed_identifiers(self, db: PlainDatabase):
        self.identifiers |= set(db.docs)

    # -- line-oriented replay format -----------------------------------------

    def to_text(self) -> str:
        lines = []
        for entry in self.entries:
            if entry[1] == OP_SEARCH:
                lines.append(f"{entry[0]} search {entry[2]}")
            else:
                words = ",".join(sorted(entry[3]))
                lines.append(f"{entry[0]} {entry[1]} {entry[2]} {words}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "QueryLog":
        log = cls()
        last = 0
        for raw in text.splitlines():
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split()
            i = int(parts[0])
            if i <= last:
                raise ParameterError("query counters must strictly increase")
            last = i
            op = parts[1]
            if op == OP_SEARCH:
                log.entries.append((i, OP_SEARCH, parts[2]))
            elif op in (OP_ADD, OP_DELETE):
                doc_id = int(parts[2])
                words = frozenset(parts[3].split(",")) if len(parts) > 3 else frozenset()
                log.entries.append((i, op, doc_id, words))
                if op == OP_ADD:
                    log.identifiers.add(doc_id)
            else:
                raise ParameterError(f"unknown op {op!r}")
            log._next = i + 1
        return log


def setup_leakage(db: PlainDatabase, pack_width: int) -> int:
    """Total encrypted-index entries: sum of per-keyword ceil(matches/p)."""
    inverted = build_inverted_index(db)
    return sum((len(ids) + pack_width - 1) // pack_width
               for ids in inverted.values())


def search_pattern(keyword: str, log: QueryLog) -> set[int]:
    return {e[0] for e in log.entries if e[1] == OP_SEARCH and e[2] == keyword}


def add_pattern(doc_id: int, keyword: str, log: QueryLog) -> set[int]:
    return {e[0] for e in log.entries
            if e[1] == OP_ADD and e[2] == doc_id and keyword in e[3]}


def del_pattern(doc_id: int, keyword: str, log: QueryLog) -> set[int]:
    return {e[0] for e in log.entries
            if e[1] == OP_DELETE and e[2] == doc_id and keyword in e[3]}


def add_pattern_by_keyword(keyword: str, log: QueryLog,
                           identifiers) -> dict[int, frozenset[int]]:
    """doc id -> indices of the adds that attached `keyword` to it; ids whose
    pattern is empty are excluded."""
    out = {}
    for doc_id in identifiers:
        indices = add_pattern(doc_id, keyword, log)
        if indices:
            out[doc_id] = frozenset(indices)
    return out


def del_pattern_by_keyword(keyword: str, log: QueryLog,
                           identifiers) -> dict[int, frozenset[int]]:
    out = {}
    for doc_id in identifiers:
        indices = del_pattern(doc_id, keyword, log)
        if indices:
            out[doc_id] = frozenset(indices)
    return out


def search_leakage(keyword: str, log: QueryLog, identifiers, db) -> dict:
    """Everything a search transcript may reveal about `keyword`."""
    if hasattr(db, "search"):
        matches = set(db.search(keyword))
    else:
        matches = set(db.matching(keyword))
    return {
        "search_pattern": search_pattern(keyword, log),
        "matches": matches,
        "add_pattern": add_pattern_by_keyword(keyword, log, identifiers),
        "del_pattern": del_pattern_by_keyword(keyword, log, identifiers),
    }


def update_leakage(op: str, doc_id: int, keywords, log: QueryLog) -> dict:
    """Everything an update transcript may reveal.

    Keyword identities are withheld; only per-keyword history patterns appear,
    and the document id appears only once one of its keywords has been
    searched before.
    """
    if op not in (OP_ADD, OP_DELETE):
        raise ParameterError(f"update op must be add or del, got {op!r}")
    words = sorted(set(keywords))
    patterns = []
    any_searched = False
    for w in words:
        sp = search_pattern(w, log)
        any_searched |= bool(sp)
        patterns.append({
            "search_pattern": sp,
            "add_pattern": add_pattern(doc_id, w, log),
            "del_pattern": del_pattern(doc_id, w, log),
        })
    return {
        "op": op,
        "keyword_count": len(words),
        "patterns": patterns,
        "doc_id": doc_id if any_searched else None,
    }


def transcript_shape(payloads) -> list[tuple[str, int, int]]:
    """(opcode, payload size, record count) per transaction; the shape two
    transcripts must share when their allowed leakage is equal."""
    shape = []
    for payload in payloads:
        shape.append((wire.payload_opcode_name(payload), len(payload),
                      wire.payload_entry_count(payload)))
    return shape
