"""Corpus ingestion and synthetic database generation.

Tokenization is deliberately minimal and deterministic: lowercase, split on
anything non-alphanumeric, drop tokens shorter than three characters.
Stopword removal is off unless asked for.
"""

from __future__ import annotations

import os
import random
import re

from .errors import ParameterError
from .index import PlainDatabase

_TOKEN = re.compile(r"[a-z0-9]+")

# Minimal list applied only when drop_stopwords is requested.
STOPWORDS = frozenset("""
the and for are was with that this from not you all can has have had but his
her its our their will would there been were they them then than
""".split())


def tokenize(text: str, drop_stopwords: bool = False) -> set[str]:
    tokens = {t for t in _TOKEN.findall(text.lower()) if len(t) >= 3}
    if drop_stopwords:
        tokens -= STOPWORDS
    return tokens


def ingest(corpus_dir: str, max_docs: int | None = None,
           max_pairs: int | None = None,
           drop_stopwords: bool = False) -> PlainDatabase:
    """Read a directory of text files into a database, ids in filename order.

    When max_pairs is set the total keyword/id pair count is truncated to it
    exactly, dropping the lexicographically largest keywords of the last
    document first.
    """
    try:
        names = sorted(n for n in os.listdir(corpus_dir)
                       if os.path.isfile(os.path.join(corpus_dir, n)))
    except OSError as exc:
        raise ParameterError(f"cannot read corpus directory: {exc}") from exc
    if max_docs is not None:
        names = names[:max_docs]
    db = PlainDatabase()
    pairs = 0
    for doc_id, name in enumerate(names):
        with open(os.path.join(corpus_dir, name), "r", errors="replace") as fh:
            words = sorted(tokenize(fh.read(), drop_stopwords))
        if not words:
            continue
        if max_pairs is not None and pairs + len(words) > max_pairs:
            words = words[:max_pairs - pairs]
            if not words:
                break
        db.add_doc(doc_id, words)
        pairs += len(words)
        if max_pairs is not None and pairs >= max_pairs:
            break
    if not db.docs:
        raise ParameterError(f"no usable documents in {corpus_dir!r}")
    return db


def synthetic_single_match_db(n_keywords: int, prefix: str = "kw") -> PlainDatabase:
    """One keyword per document: the index holds exactly n_keywords entries
    regardless of packing width. Mirrors the shape used for upload sizing."""
    return PlainDatabase({i: {f"{prefix}{i:06d}"} for i in range(n_keywords)})


def synthetic_db(n_keywords: int, docs_per_keyword: int,
                 seed: int = 0, extra_shared: int = 0) -> PlainDatabase:
    """Random many-to-many database with reproducible shape."""
    rng = random.Random(seed)
    db = PlainDatabase()
    next_id = 0
    shared_pool = [f"shared{j:04d}" for j in range(extra_shared)]
    for k in range(n_keywords):
        for _ in range(docs_per_keyword):
            words = {f"kw{k:06d}"}
            if shared_pool:
                words.add(rng.choice(shared_pool))
            db.add_doc(next_id, words)
            next_id += 1
    return db


# Reference evaluation shapes: (keyword/id pairs, distinct keywords).
DB_SHAPES = {
    "db1": (100_763, 22_673),
    "db2": (300_617, 54_980),
    "db3": (500_567, 75_924),
    "db4": (1_000_141, 123_912),
}


def synthetic_scaled_db(total_pairs: int, distinct_keywords: int,
                        avg_keywords_per_doc: int = 10) -> PlainDatabase:
    """Deterministic database with exactly the requested totals.

    Pairs are spread near-uniformly over the keywords and documents are
    shared across keywords, so the shape scales like a real corpus while the
    (pairs, keywords) point stays exact.
    """
    if distinct_keywords < 1 or total_pairs < distinct_keywords:
        raise ParameterError("need at least one pair per keyword")
    n_docs = max(1, total_pairs // avg_keywords_per_doc)
    base, extra = divmod(total_pairs, distinct_keywords)
    docs: dict[int, set[str]] = {}
    cursor = 0
    for j in range(distinct_keywords):
        count = base + (1 if j < extra else 0)
        if count > n_docs:
            n_docs = count  # keep (keyword, doc) pairs distinct
        for i in range(count):
            docs.setdefault((cursor + i) % n_docs, set()).add(f"kw{j:06d}")
        cursor += count
    return PlainDatabase(docs)


def shaped_db(name: str) -> PlainDatabase:
    try:
        pairs, keywords = DB_SHAPES[name.lower()]
    except KeyError:
        raise ParameterError(
            f"unknown shape {name!r}; choose from {sorted(DB_SHAPES)}") from None
    return synthetic_scaled_db(pairs, keywords)
